#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pfedmoe {

// Error codes are stable identifiers used by the CLI exit path
// (`error: <code>: <message>`): shape, non_finite, config, io, label,
// state, unsupported, checkpoint.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(msg), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool ok, const std::string& code, const std::string& msg) {
    if (!ok) fail(code, msg);
}

}  // namespace pfedmoe
