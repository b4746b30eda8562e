#include "dmpad/geometry/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "dmpad/core/error.hpp"

namespace dmpad::geometry {

namespace {
constexpr double kEdgeEps = 1e-6;
}

void LandmarkSet::validate() const {
  if (points.size() != static_cast<std::size_t>(kNumLandmarks)) {
    throw ValidationError("expected " + std::to_string(kNumLandmarks) + " landmarks, got " +
                          std::to_string(points.size()));
  }
  if (frame.width < 1 || frame.height < 1) throw ValidationError("landmark frame has no area");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0.0 && p.x < frame.width && p.y >= 0.0 && p.y < frame.height)) {
      std::ostringstream os;
      os << "landmark " << i << " (" << p.x << ", " << p.y << ") outside " << frame.width << "x"
         << frame.height << " frame";
      throw ValidationError(os.str());
    }
  }
}

LandmarkSet rescale_landmarks(const LandmarkSet& lm, FrameSize target) {
  if (target.width < 1 || target.height < 1) throw ValidationError("rescale target has no area");
  const double scale_w = static_cast<double>(target.width) / lm.frame.width;
  const double scale_h = static_cast<double>(target.height) / lm.frame.height;
  LandmarkSet out;
  out.frame = target;
  out.points.reserve(lm.points.size());
  for (const Point& p : lm.points) {
    out.points.push_back({std::clamp(p.x * scale_w, 0.0, target.width - kEdgeEps),
                          std::clamp(p.y * scale_h, 0.0, target.height - kEdgeEps)});
  }
  return out;
}

LandmarkSet read_landmarks(const std::filesystem::path& path, FrameSize frame) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open landmark file: " + path.string());
  LandmarkSet lm;
  lm.frame = frame;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point p;
    if (!(ls >> p.x >> p.y)) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": expected two numbers 'x y'");
    }
    lm.points.push_back(p);
  }
  try {
    lm.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return lm;
}

void write_landmarks(const std::filesystem::path& path, const LandmarkSet& lm) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write landmark file: " + path.string());
  out << std::setprecision(9);
  for (const Point& p : lm.points) out << p.x << ' ' << p.y << '\n';
}

}  // namespace dmpad::geometry
