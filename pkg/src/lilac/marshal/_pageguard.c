/* Write tracking for page-aligned memory regions.
 *
 * pg_protect makes the pages covering a region read-only.  The first write
 * faults into pg_handler, which flags every region sharing the page as
 * dirty and makes the page writable again.  Faults outside tracked pages
 * are passed on to whatever handler was installed before us.
 */
#define _GNU_SOURCE
#include <signal.h>
#include <stdint.h>
#include <string.h>
#include <sys/mman.h>
#include <unistd.h>

#define PG_MAX_REGIONS 1024

struct pg_region {
    uintptr_t lo, hi; /* page-rounded bounds, hi exclusive */
    volatile sig_atomic_t active;
    volatile sig_atomic_t dirty;
    volatile sig_atomic_t armed;
    volatile sig_atomic_t faults;
};

static struct pg_region regions[PG_MAX_REGIONS];
static struct sigaction previous_segv, previous_bus;
static int installed = 0;
static uintptr_t page_size = 0;

static void pg_handler(int sig, siginfo_t *info, void *ctx) {
    uintptr_t addr = (uintptr_t)info->si_addr;
    uintptr_t page = addr & ~(page_size - 1);
    int hit = 0;
    for (int k = 0; k < PG_MAX_REGIONS; k++) {
        struct pg_region *r = &regions[k];
        if (r->active && r->armed && page >= r->lo && page < r->hi) {
            r->dirty = 1;
            r->faults += 1;
            hit = 1;
        }
    }
    if (hit && mprotect((void *)page, page_size, PROT_READ | PROT_WRITE) == 0)
        return;
    struct sigaction *prev = sig == SIGBUS ? &previous_bus : &previous_segv;
    if (prev->sa_flags & SA_SIGINFO) {
        if (prev->sa_sigaction) {
            prev->sa_sigaction(sig, info, ctx);
            return;
        }
    } else if (prev->sa_handler != SIG_DFL && prev->sa_handler != SIG_IGN) {
        prev->sa_handler(sig);
        return;
    }
    /* no usable previous handler: restore the default and let it refault */
    signal(sig, SIG_DFL);
}

/* (Re)install the handler; someone may have replaced it since last time. */
int pg_install(void) {
    struct sigaction cur;
    if (installed && sigaction(SIGSEGV, NULL, &cur) == 0 && (cur.sa_flags & SA_SIGINFO) &&
        cur.sa_sigaction == pg_handler)
        return 0;
    page_size = (uintptr_t)sysconf(_SC_PAGESIZE);
    struct sigaction sa;
    memset(&sa, 0, sizeof sa);
    sa.sa_sigaction = pg_handler;
    sa.sa_flags = SA_SIGINFO | SA_NODEFER;
    sigemptyset(&sa.sa_mask);
    if (sigaction(SIGSEGV, &sa, &previous_segv) != 0)
        return -1;
    if (sigaction(SIGBUS, &sa, &previous_bus) != 0)
        return -1;
    installed = 1;
    return 0;
}

long pg_page_size(void) { return (long)sysconf(_SC_PAGESIZE); }

int pg_register(void *base, size_t nbytes) {
    if (!installed || nbytes == 0)
        return -1;
    uintptr_t lo = (uintptr_t)base & ~(page_size - 1);
    uintptr_t hi = ((uintptr_t)base + nbytes + page_size - 1) & ~(page_size - 1);
    for (int k = 0; k < PG_MAX_REGIONS; k++) {
        if (!regions[k].active) {
            regions[k].lo = lo;
            regions[k].hi = hi;
            regions[k].dirty = 1;
            regions[k].armed = 0;
            regions[k].faults = 0;
            regions[k].active = 1;
            return k;
        }
    }
    return -2;
}

int pg_protect(int id) {
    struct pg_region *r = &regions[id];
    r->dirty = 0;
    r->armed = 1;
    return mprotect((void *)r->lo, r->hi - r->lo, PROT_READ);
}

int pg_dirty(int id) { return regions[id].dirty; }

int pg_faults(int id) { return regions[id].faults; }

int pg_unregister(int id) {
    struct pg_region *r = &regions[id];
    if (!r->active)
        return 0;
    r->armed = 0;
    int rc = mprotect((void *)r->lo, r->hi - r->lo, PROT_READ | PROT_WRITE);
    r->active = 0;
    /* neighbours on the released pages can no longer see writes */
    for (int k = 0; k < PG_MAX_REGIONS; k++) {
        struct pg_region *o = &regions[k];
        if (o->active && o->armed && o->lo < r->hi && r->lo < o->hi)
            o->dirty = 1;
    }
    return rc;
}
