#pragma once

#include <cstddef>

#include "pbq/saliency.hpp"

namespace pbq {

struct QuantConfig {
  double salient_fraction = 0.1;
  Criterion criterion = Criterion::magnitude;
  Granularity granularity = Granularity::element;
  std::size_t group_size = 0; // 0: the whole row is one group
  unsigned salient_bits = 8;  // 1..8, codes are stored as bytes
  double damping_fraction = 0.01;
  /// Re-fit a group's scales from the compensated weights when the column
  /// loop enters it, instead of fitting everything once up front.
  bool refit_groups = false;

  /// Throws InvalidArgument on any out-of-range field.
  void validate() const;
};

} // namespace pbq
