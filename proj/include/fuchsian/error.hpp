#pragma once

#include <stdexcept>
#include <string>

namespace fuchsian {

/// Input or precondition violated (bad shapes, non-invariant flags,
/// product relation broken, ...). The CLI maps this to exit status 2.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string reason, const std::string& what)
        : std::runtime_error(what), reason_(std::move(reason)) {}

    /// Machine-readable reason tag, e.g. "shape-mismatch".
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

/// Numerical failure: non-convergence, ill-conditioning, tolerance not met.
/// The CLI maps this to exit status 3.
class NumericError : public std::runtime_error {
public:
    NumericError(std::string reason, const std::string& what)
        : std::runtime_error(what), reason_(std::move(reason)) {}

    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

} // namespace fuchsian
