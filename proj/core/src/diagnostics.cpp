#include "microtrap/diagnostics.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace microtrap {
namespace {

std::mutex sink_mutex;

WarningSink& sink_instance() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex);
    return std::exchange(sink_instance(), std::move(sink));
}

void warn(std::string_view message) {
    std::lock_guard lock(sink_mutex);
    if (sink_instance()) sink_instance()(message);
}

}  // namespace microtrap
