#ifndef NGL_ERROR_HPP
#define NGL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ngl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed vertex address or non-adjacent pair.
class AddressError : public Error {
public:
    using Error::Error;
};

// A result would depend on vertices outside the truncation.
class BoundaryError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ConstraintError : public Error {
public:
    using Error::Error;
};

class ConnectivityError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

// Girth generation gave up; carries the best girth seen over all attempts.
class GenerationError : public Error {
public:
    GenerationError(const std::string& what, int best_girth)
        : Error(what), best_girth_(best_girth) {}
    int best_girth() const noexcept { return best_girth_; }

private:
    int best_girth_;
};

}  // namespace ngl

#endif  // NGL_ERROR_HPP
