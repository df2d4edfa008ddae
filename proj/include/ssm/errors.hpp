#ifndef SSM_ERRORS_HPP
#define SSM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ssm {

// Error categories map onto CLI exit codes: config/usage -> 1,
// data/file problems -> 2, numerical failures -> 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ssm

#endif
