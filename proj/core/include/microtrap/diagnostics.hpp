#pragma once

#include <functional>
#include <string_view>

namespace microtrap {

using WarningSink = std::function<void(std::string_view)>;

// Non-fatal conditions (partially rendered spots, hot loads, no-op pumps) are
// routed here. Default sink writes to stderr. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace microtrap
