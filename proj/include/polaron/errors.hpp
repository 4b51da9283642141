#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace polaron {

/// Base of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (e.g. the zero mode).
class domain_error : public error {
public:
    using error::error;
};

/// Caller broke a documented precondition.
class contract_violation : public error {
public:
    using error::error;
};

/// A size limit (lattice points, basis dimension, pair budget) would be exceeded.
class capacity_error : public error {
public:
    capacity_error(const std::string& what, std::size_t requested, std::size_t limit)
        : error(what + " (requested " + std::to_string(requested) + ", limit " +
                std::to_string(limit) + ")"),
          requested_(requested),
          limit_(limit) {}

    std::size_t requested() const noexcept { return requested_; }
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t requested_;
    std::size_t limit_;
};

/// An iterative method failed to reach its tolerance.
class accuracy_error : public error {
public:
    accuracy_error(const std::string& what, double last_residual)
        : error(what + " (last residual " + format(last_residual) + ")"),
          last_residual_(last_residual) {}

    double last_residual() const noexcept { return last_residual_; }

private:
    static std::string format(double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", x);
        return buf;
    }
    double last_residual_;
};

class lookup_error : public error {
public:
    using error::error;
};

/// Malformed configuration or command line.
class usage_error : public error {
public:
    using error::error;
};

}  // namespace polaron
