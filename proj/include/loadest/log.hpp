#pragma once

#include <functional>
#include <string>

namespace loadest {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: stderr). Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void log_warning(const std::string& message);

}  // namespace loadest
