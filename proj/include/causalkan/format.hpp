#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace causalkan {

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

/// Locale-independent parse of the whole string; nullopt on any junk.
std::optional<double> parse_real(std::string_view s);

}  // namespace causalkan
