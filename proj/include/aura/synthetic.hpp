#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aura/data_io.hpp"

namespace aura {

/// Knobs of the seeded correlated benchmark. Each instance is one recording
/// with one 5 s window of every modality, all driven by a class prototype
/// plus per-instance tempo, intensity and phase.
struct SyntheticSpec {
  std::size_t n_classes = 8;
  std::size_t pairs_per_class = 64;
  double noise_level = 0.3;  // in [0, 1]
  std::uint64_t seed = 0;
  std::size_t embedding_dim = 512;
};

/// The eight Ego-Exo4D activity labels, in their canonical order.
const std::vector<std::string>& ego_exo_labels();

/// Label names for `n` classes: the Ego-Exo4D names first, then "activity k".
std::vector<std::string> synthetic_labels(std::size_t n);

/// Words describing instance tempo and intensity, index-aligned with the
/// levels the generator uses.
const std::vector<std::string>& tempo_words();
const std::vector<std::string>& intensity_words();

/// Deterministic in its SyntheticSpec. All tensors are float32-representable, so a
/// written-then-read copy compares equal to the returned dataset.
Dataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace aura
