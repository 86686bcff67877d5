#include "vtp/data/window.hpp"

#include "vtp/error.hpp"

namespace vtp::data {

TactileWindow TactileWindow::init(const sim::Image& first, int horizon) {
  require(horizon >= 1, ErrorCode::kInvalidHorizon, "tactile horizon must be >= 1, got " + std::to_string(horizon));
  require(first.channels == 3, ErrorCode::kShapeMismatch, "tactile frames must have 3 channels");
  TactileWindow w;
  w.frames_.assign(static_cast<size_t>(horizon), first);
  return w;
}

void TactileWindow::push(const sim::Image& frame) {
  const auto& ref = frames_.front();
  require(frame.height == ref.height && frame.width == ref.width && frame.channels == ref.channels,
          ErrorCode::kShapeMismatch, "tactile frame shape differs from the window's frames");
  frames_.pop_front();
  frames_.push_back(frame);
}

TactileWindow TactileWindow::pushed(const sim::Image& frame) const {
  TactileWindow w = *this;
  w.push(frame);
  return w;
}

std::vector<float> TactileWindow::collapsed() const {
  std::vector<const sim::Image*> ptrs;
  for (const auto& f : frames_) ptrs.push_back(&f);
  return collapse_frames(ptrs);
}

std::vector<float> collapse_frames(const std::vector<const sim::Image*>& frames) {
  require(!frames.empty(), ErrorCode::kInvalidHorizon, "no frames to collapse");
  const int h = frames[0]->height, w = frames[0]->width;
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<float> out(frames.size() * 3 * plane);
  for (size_t f = 0; f < frames.size(); ++f) {
    const auto& px = frames[f]->pixels;
    require(frames[f]->height == h && frames[f]->width == w && frames[f]->channels == 3, ErrorCode::kShapeMismatch,
            "tactile frames differ in shape");
    for (int ch = 0; ch < 3; ++ch) {
      float* dst = &out[(f * 3 + static_cast<size_t>(ch)) * plane];
      for (size_t i = 0; i < plane; ++i) dst[i] = px[i * 3 + static_cast<size_t>(ch)];
    }
  }
  return out;
}

}  // namespace vtp::data
