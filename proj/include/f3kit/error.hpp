#pragma once

#include <stdexcept>
#include <string>

namespace f3kit {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
    usage = 2,        // bad arguments / violated preconditions
    io = 3,           // missing or unwritable files
    data_format = 4,  // corrupt or wrongly-typed inputs
    numeric = 5,      // divergence, non-finite values
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

}  // namespace f3kit
