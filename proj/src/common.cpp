#include "mbmon/common.hpp"

#include <cstdio>

namespace mbmon {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
    // FNV-1a over the tag, folded into the master seed, then two splitmix
    // rounds so nearby (master, index) pairs land far apart.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = master ^ h;
    state ^= 0x9e3779b97f4a7c15ULL * (index + 1);
    splitmix64(state);
    return splitmix64(state);
}

std::string format_g17(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace mbmon
