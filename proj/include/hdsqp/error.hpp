#ifndef HDSQP_ERROR_HPP
#define HDSQP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hdsqp {

/// Malformed or inconsistent input data (case files, manifests, traces).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Syntax error at a known line of a text input.
class ParseError : public InputError {
public:
    ParseError(int line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

/// A factorization that must succeed did not (usually a misconfigured
/// regularization or a broken partition).
class NumericalBreakdown : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hdsqp

#endif
