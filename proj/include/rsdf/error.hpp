#pragma once

#include <stdexcept>
#include <string>

namespace rsdf {

/// Base of every exception thrown by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable file, unexpected bit depth, bad magic or malformed tensor record.
class format_error : public error {
public:
    using error::error;
};

/// Inputs that must share dimensions do not.
class alignment_error : public error {
public:
    using error::error;
};

/// Tensor or vector with the wrong length.
class shape_error : public error {
public:
    using error::error;
};

class index_error : public error {
public:
    using error::error;
};

/// Input too small or too uniform for the requested operation.
class degenerate_input_error : public error {
public:
    using error::error;
};

class config_error : public error {
public:
    using error::error;
};

/// Iterative solver gave up; carries the last relative residual.
class numerical_error : public error {
public:
    numerical_error(const std::string& what, double residual)
        : error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace rsdf
