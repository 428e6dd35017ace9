#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace causalkan {

/// One point of the architecture/hyperparameter grid.
struct HpPoint {
  std::vector<std::size_t> hidden_widths;  // outcome net (S/T) or representation (TAR/Dragon)
  int grid_size = 5;
  int order = 3;
  double lambda_edge = 0.01;
  bool sparse_init = false;
  bool use_product_nodes = false;
  std::vector<std::size_t> head_widths;  // TAR/Dragon head hidden widths
  std::size_t rep_width = 8;             // D_z
  bool identity_base = false;            // b(z) = z instead of SiLU

  nlohmann::json to_json() const;
  static HpPoint from_json(const nlohmann::json& doc);

  friend bool operator==(const HpPoint&, const HpPoint&) = default;
};

}  // namespace causalkan
