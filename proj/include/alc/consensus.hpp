// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alc/data_model.hpp"
#include "alc/error.hpp"
#include "alc/geometry.hpp"

namespace alc {

/// Expert labels on `image` corroborated by at least one crowd label covering
/// more than `delta` of the expert box. One crowd label may corroborate
/// several expert labels.
inline std::vector<Label> consensus_labels(std::span<const Label> expert, std::span<const Label> crowd,
                                           double delta) {
  std::vector<Label> out;
  for (const auto& p : expert) {
    for (const auto& c : crowd) {
      if (c.category_id == p.category_id && overlap_fraction(c.box, p.box) > delta) {
        Label l = p;
        l.source = Source::Expert;
        l.confidence = 1.0;
        out.push_back(std::move(l));
        break;
      }
    }
  }
  return out;
}

/// Grows the consensus set over `images`.
///
/// Entries for images already present in `previous` are recomputed from the
/// given expert/crowd sets rather than merged; other images of `previous`
/// carry over unchanged.
inline AnnotationSet build_consensus_increment(const AnnotationSet& expert, const AnnotationSet& crowd,
                                               const AnnotationSet& previous,
                                               std::span<const ImageId> images, double delta = 0.5) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  AnnotationSet out = previous;
  for (auto id : images) {
    if (!expert.has_image(id))
      throw StateError("consensus: image " + std::to_string(id) + " is not covered by the expert set");
    if (!out.has_image(id)) out.add_image(expert.image(id));
    out.set_labels(id, consensus_labels(expert.labels(id), crowd.labels(id), delta));
  }
  return out;
}

}  // namespace alc
