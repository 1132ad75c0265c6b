#pragma once

#include <stdexcept>
#include <string>

namespace siltwin {

// Base for all library errors. Subclasses carry the condition name in
// code() so callers can map failures to exit codes without string
// matching on what().
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define SILTWIN_DEFINE_ERROR(Name)                              \
    class Name : public ::siltwin::Error {                      \
    public:                                                     \
        explicit Name(const std::string& message)               \
            : ::siltwin::Error(#Name, message) {}               \
    }

}  // namespace siltwin
