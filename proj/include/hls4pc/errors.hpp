#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hls4pc {

/// Machine-parsable error categories surfaced by the CLI as "error: <category>: <message>".
enum class ErrorCategory { parse, shape, config, io };

constexpr std::string_view to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::shape: return "shape";
        case ErrorCategory::config: return "config";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message, int line = -1)
        : std::runtime_error(format(category, message, line)), category_(category), line_(line) {}

    ErrorCategory category() const { return category_; }

    /// 1-based input line for parse errors, -1 when not applicable.
    int line() const { return line_; }

private:
    static std::string format(ErrorCategory category, const std::string& message, int line) {
        std::string s(to_string(category));
        s += ": ";
        s += message;
        if (line >= 0) {
            s += " (line ";
            s += std::to_string(line);
            s += ")";
        }
        return s;
    }

    ErrorCategory category_;
    int line_;
};

}  // namespace hls4pc
