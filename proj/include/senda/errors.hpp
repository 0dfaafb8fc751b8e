#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace senda {

/// Malformed input file or wire payload. Carries the offending line when known.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// External generator failed: unreachable, timed out, or answered off-protocol.
class AdapterError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace senda
