#pragma once

#include <vector>

#include "narrowforge/box.hpp"
#include "narrowforge/network.hpp"

namespace narrowforge {

/// Per-layer enclosures from interval propagation.
struct IntervalTrace {
    std::vector<Box> pre_activation;   // after the layer's affine
    std::vector<Box> post_activation;  // after the layer's activation
    Box output;                        // after the final affine
};

IntervalTrace propagate_interval_trace(const Network& net, const Box& box);

/// Sound enclosures of every intermediate state: post-activation box per
/// layer followed by the output box. Intervals may be loose, never unsound.
std::vector<Box> propagate_intervals(const Network& net, const Box& box);

/// Enclosure of an affine image of a box.
Box affine_interval(const AffineMap& a, const Box& box);

}  // namespace narrowforge
