// Marshal objects for generated harnesses.
//
// A ReadObject caches the result of an update hook over an input range and
// reruns it only when the range's contents change (FNV-1a checksum) or a
// different range is acquired.  A WriteObject owns an output buffer whose
// contents are copied back by write_back.
#pragma once

#include <cstddef>
#include <cstdint>

namespace lilac {

inline std::uint64_t fnv1a64(const void* data, std::size_t nbytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t k = 0; k < nbytes; ++k) {
        h ^= p[k];
        h *= 0x100000001b3ull;
    }
    return h;
}

struct Counters {
    long n_construct = 0;
    long n_update = 0;
    long n_destruct = 0;
};

template <typename In, typename Out>
using Hook = void (*)(In*, int, Out&);

template <typename In, typename Out, Hook<In, Out> Update, Hook<In, Out> Construct, Hook<In, Out> Destruct>
class ReadObject {
public:
    Counters counters;

    Out acquire(In* in, int size) {
        if (constructed_ && (in != in_ || size != size_)) release();
        if (!constructed_) {
            Construct(in, size, out_);
            ++counters.n_construct;
            constructed_ = true;
            in_ = in;
            size_ = size;
            update();
        } else if (checksum() != sum_) {
            update();
        }
        return out_;
    }

    void release() {
        if (!constructed_) return;
        ++counters.n_destruct;
        Destruct(in_, size_, out_);
        constructed_ = false;
    }

private:
    std::uint64_t checksum() const {
        return size_ > 0 ? fnv1a64(in_, static_cast<std::size_t>(size_) * sizeof(In)) : 0;
    }

    void update() {
        ++counters.n_update;
        Update(in_, size_, out_);
        sum_ = checksum();
    }

    In* in_ = nullptr;
    int size_ = -1;
    bool constructed_ = false;
    std::uint64_t sum_ = 0;
    Out out_{};
};

template <typename In, typename Out, Hook<In, Out> Update, Hook<In, Out> Construct, Hook<In, Out> Destruct>
class WriteObject {
public:
    Counters counters;

    Out acquire(In* in, int size) {
        if (constructed_ && (in != in_ || size != size_)) release();
        if (!constructed_) {
            Construct(in, size, out_);
            ++counters.n_construct;
            constructed_ = true;
            in_ = in;
            size_ = size;
        }
        return out_;
    }

    // copy the harness result back to the caller's array
    void write_back(In* in, int size) {
        ++counters.n_update;
        Update(in, size, out_);
    }

    void release() {
        if (!constructed_) return;
        ++counters.n_destruct;
        Destruct(in_, size_, out_);
        constructed_ = false;
    }

private:
    In* in_ = nullptr;
    int size_ = -1;
    bool constructed_ = false;
    Out out_{};
};

}  // namespace lilac
