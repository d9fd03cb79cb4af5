#pragma once

#include <string>
#include <vector>

#include "hart/synth.hpp"

namespace hart {

// On-disk layout: a manifest.txt listing sequence directories one per line
// (relative to the manifest); each directory holds frames/NNNNNN.png
// (1-indexed, zero-padded) and boxes.csv with header frame,x,y,w,h.
//
// Boxes and file presence are validated eagerly, pixels load lazily.
// Iteration order is the manifest order.
std::vector<SequencePtr> load_dataset(const std::string& manifest_path);

// A single sequence directory (frames/ + boxes.csv).
SequencePtr load_sequence_dir(const std::string& dir);

}  // namespace hart
