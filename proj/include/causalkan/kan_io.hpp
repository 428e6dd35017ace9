#pragma once

#include <json.hpp>

#include "causalkan/kan.hpp"

namespace causalkan {

inline constexpr int kNetworkFormatVersion = 1;

nlohmann::json atom_fit_to_json(const AtomFit& fit);
AtomFit atom_fit_from_json(const nlohmann::json& doc);

/// Reals are written in shortest round-trip form, so reading back gives
/// bit-identical parameters.
nlohmann::json network_to_json(const KanNetwork& net);
/// Throws parse error on malformed documents or an unknown version.
KanNetwork network_from_json(const nlohmann::json& doc);

}  // namespace causalkan
