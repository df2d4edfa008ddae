#ifndef SSM_IO_HPP
#define SSM_IO_HPP

#include "ssm/geometry.hpp"
#include "ssm/volume.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ssm {

// File formats
// ------------
// Point files: plain text, one point per row, whitespace-separated
// coordinates (the de facto "particles" convention).
//
// Landmark files: same, with a leading curve-name column per row.
//
// Volume files:
//     SDTVOL1
//     dims: a b c
//     origin: x y z
//     spacing: sx sy sz
//     <values, x-fastest, whitespace separated>
//
// All floating-point output uses 17 significant digits, so save -> load
// round trips are bit-exact.

PointSet load_point_set(const std::filesystem::path& path);
void save_point_set(const PointSet& ps, const std::filesystem::path& path);

LandmarkSet load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSet& lm, const std::filesystem::path& path);

ScalarVolume load_volume(const std::filesystem::path& path);
void save_volume(const ScalarVolume& vol, const std::filesystem::path& path);

// Round-trip-exact decimal rendering of a double.
std::string format_double(double v);

// Minimal CSV writer for the numeric report files; writes a header row then
// one row per record, all doubles via format_double.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string csv_cell(double v);

} // namespace ssm

#endif
