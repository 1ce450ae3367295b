#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace sema {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {

struct WarningSink {
    std::mutex mutex;
    WarningHandler handler = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
};

inline WarningSink& warning_sink() {
    static WarningSink sink;
    return sink;
}

}  // namespace detail

/// Replaces the process-wide warning handler; returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
    auto& sink = detail::warning_sink();
    std::lock_guard lock(sink.mutex);
    std::swap(sink.handler, handler);
    return handler;
}

inline void warn(const std::string& message) {
    auto& sink = detail::warning_sink();
    std::lock_guard lock(sink.mutex);
    if (sink.handler) sink.handler(message);
}

}  // namespace sema
