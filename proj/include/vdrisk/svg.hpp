#pragma once

// Minimal deterministic SVG renderer for survival step curves and ROC
// curves: fixed viewport, fixed palette, fixed decimal formatting, so
// re-rendering the same data is byte-identical.

#include <string>
#include <vector>

#include "vdrisk/discrimination.hpp"
#include "vdrisk/survival.hpp"

namespace vdrisk::svg {

struct LabeledKmCurve {
  std::string label;
  const survival::KmCurve* curve = nullptr;
};

// Step plot of one or more survival curves over [0, max_days] x [0, 1].
std::string km_plot(const std::vector<LabeledKmCurve>& curves, double max_days,
                    const std::string& title);

struct LabeledRocCurve {
  std::string label;
  const discrimination::RocCurve* curve = nullptr;
};

// ROC plot with the chance diagonal; AUC is appended to each legend label.
std::string roc_plot(const std::vector<LabeledRocCurve>& curves, const std::string& title);

}  // namespace vdrisk::svg
