#pragma once

#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothfit {

/// Base class of every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI's structured error output.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
    virtual std::vector<std::string> details() const { return {}; }
};

/// One or more parameters violate their documented domain. All violations
/// found are carried, not just the first.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> problems);
    explicit ValidationError(const std::string& problem)
        : ValidationError(std::vector<std::string>{problem}) {}
    const char* kind() const noexcept override { return "validation"; }
    std::vector<std::string> details() const override { return problems_; }
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

class RangeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "range"; }
};

class NoSolutionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "no_solution"; }
};

/// Several boundary pairs satisfy the same smooth-fit system. The caller has
/// to pick one (e.g. by narrowing the bracket).
class MultipleRootsError : public Error {
public:
    MultipleRootsError(const std::string& what, std::vector<std::pair<double, double>> roots)
        : Error(what), roots_(std::move(roots)) {}
    const char* kind() const noexcept override { return "multiple_roots"; }
    std::vector<std::string> details() const override;
    const std::vector<std::pair<double, double>>& roots() const { return roots_; }

private:
    std::vector<std::pair<double, double>> roots_;
};

class SingularityError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "singularity"; }
};

class DivergenceError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "divergence"; }
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "insufficient_data"; }
};

class QualityError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "quality"; }
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    const char* kind() const noexcept override { return "parse"; }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Rethrows `error` as the same library error type with `context` prefixed
/// to its message. Non-library exceptions are rethrown unchanged.
[[noreturn]] void rethrow_with_context(const std::exception_ptr& error, const std::string& context);

}  // namespace smoothfit
