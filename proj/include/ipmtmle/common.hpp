#ifndef IPMTMLE_COMMON_HPP
#define IPMTMLE_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipmtmle {

// Error categories map to CLI exit codes: usage=1, data=2, numeric=3.
enum class errc { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
  errc code;
  Error(errc c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline Error data_error(const std::string& msg) { return Error(errc::data, msg); }
inline Error numeric_error(const std::string& msg) { return Error(errc::numeric, msg); }
inline Error usage_error(const std::string& msg) { return Error(errc::usage, msg); }

// Order-stable pairwise summation; used wherever a sum must not depend on
// accumulation noise from large n.
double pairwise_sum(const double* x, std::size_t n);
double pairwise_sum(const std::vector<double>& x);

// 64-bit mix (splitmix64 finalizer); fold assignments and substreams key off it.
std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b);

} // namespace ipmtmle

#endif
