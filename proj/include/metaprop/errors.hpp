#ifndef METAPROP_ERRORS_HPP
#define METAPROP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace metaprop {

// Error taxonomy mirrors the CLI exit-code contract:
//   DataError -> 2, ConvergenceError -> 3, RankError -> 4.

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

class RankError : public std::runtime_error {
public:
    explicit RankError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace metaprop

#endif
