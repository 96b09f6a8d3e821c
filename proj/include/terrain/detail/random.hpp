#ifndef TERRAIN_DETAIL_RANDOM_HPP
#define TERRAIN_DETAIL_RANDOM_HPP

#include <random>

namespace terrain::detail {

// std:: distributions are implementation-defined; these keep draws identical
// across standard libraries.
inline double uniform01(std::mt19937_64 &gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64 &gen, double lo, double hi) { return lo + (hi - lo) * uniform01(gen); }

} // namespace terrain::detail

#endif // TERRAIN_DETAIL_RANDOM_HPP
