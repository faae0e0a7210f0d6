#include "ayce/data/crop_source.hpp"

#include <cmath>

#include "ayce/core/errors.hpp"

namespace ayce::data {

Image SyntheticCropSource::crop(const TrackRecord& track, std::size_t frame_pos) const {
  return render_crop(spec_, track, frame_pos);
}

Image DirectoryCropSource::crop(const TrackRecord& track, std::size_t frame_pos) const {
  if (frame_pos >= track.frame_count()) throw ShapeError("frame position out of range for track '" + track.id + "'");
  if (std::holds_alternative<std::int64_t>(track.frames[frame_pos]))
    return read_png(root_ / track.id / (std::to_string(frame_pos) + ".png"));
  const Image frame = read_png(root_ / std::get<std::string>(track.frames[frame_pos]));
  const Box& b = track.boxes[frame_pos];
  return data::crop(frame, static_cast<int>(std::floor(b.x)), static_cast<int>(std::floor(b.y)),
                    static_cast<int>(std::ceil(b.w)), static_cast<int>(std::ceil(b.h)));
}

}  // namespace ayce::data
