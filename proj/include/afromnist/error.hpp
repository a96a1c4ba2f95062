#pragma once

#include <stdexcept>
#include <string>

namespace afromnist {

// Bad argument values (maps to CLI exit code 2 when raised during flag
// validation).
class InvalidParameter : public std::invalid_argument {
public:
    explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed input files; messages carry the offending field and byte offset.
class ParseError : public std::runtime_error {
public:
    // tag for re-wrapping an already formatted message without appending the
    // offset suffix again
    struct formatted_t {};

    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    ParseError(formatted_t, const std::string& what, std::size_t offset)
        : std::runtime_error(what), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Filesystem / stream failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace afromnist
