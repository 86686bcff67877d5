#pragma once

#include <deque>
#include <vector>

#include "vtp/sim/render.hpp"

namespace vtp::data {

// Rolling buffer of the last h tactile frames. The collapsed view stacks the
// frames channel-wise, oldest first, into one 3h x H x W (CHW) image.
class TactileWindow {
 public:
  // Fills the buffer with h copies of `first`; h < 1 raises kInvalidHorizon.
  static TactileWindow init(const sim::Image& first, int horizon);

  // Evicts the oldest frame and appends `frame`; shape mismatch raises kShapeMismatch.
  void push(const sim::Image& frame);
  TactileWindow pushed(const sim::Image& frame) const;

  int horizon() const { return static_cast<int>(frames_.size()); }
  const std::deque<sim::Image>& frames() const { return frames_; }

  int channels() const { return 3 * horizon(); }
  std::vector<float> collapsed() const;

 private:
  std::deque<sim::Image> frames_;
};

// Channel collapse of an explicit frame list (each H x W x 3), oldest first.
std::vector<float> collapse_frames(const std::vector<const sim::Image*>& frames);

}  // namespace vtp::data
