#pragma once

#include "gs/camera.hpp"
#include "gs/image.hpp"
#include "gs/scene.hpp"
#include "gs/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gs::io {

// ASCII or binary-little-endian PLY with float/double x,y,z and 8-bit
// red,green,blue vertex properties. Colors map to [0,1] by /255; unknown
// scalar properties are skipped.
PointCloud load_ply(const std::string& path);
void save_ply(const PointCloud& cloud, const std::string& path, bool binary = true);

struct CameraEntry {
    Camera camera;
    int id = 0;
    std::string image_path; // resolved relative to the JSON file
};

// JSON array of {id, width, height, fx, fy, cx, cy, R: 9 row-major, t: 3,
// image}; R is validated (orthonormal, det +1, tolerance 1e-4).
std::vector<CameraEntry> load_cameras(const std::string& path);

// 8-bit PNG; grayscale maps to one channel, color to three. 16-bit files are
// rejected. Decode maps byte/255, encode rounds half-up and clamps, no gamma.
ImageF load_image(const std::string& path);
void save_image(const ImageF& img, const std::string& path);

// Scene + optimizer snapshot. Layout, little-endian throughout:
//   "SGS1" | u32 version | u64 iteration | u32 count | u32 max_degree |
//   u32 sh_degree[count] |
//   f32 positions[3N] | f32 log_scales[3N] | f32 rotations[4N] |
//   f32 opacity_logits[N] | f32 sh[sum 3(D_i+1)^2] |
//   u8 has_optimizer | [u64 step | f32 m-arrays | f32 v-arrays] |
//   u32 config_len | config JSON | u32 CRC32(everything before it)
struct Checkpoint {
    uint32_t version = 1;
    int64_t iteration = 0;
    GaussianSet set;
    std::optional<OptimizerState> optimizer;
    std::string config_json; // effective config at save time
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace gs::io

namespace gs {

// CLI entry point shared by the binary and the tests. Exit codes: 0 success,
// 1 usage error, 2 data error.
int cli_dispatch(const std::vector<std::string>& args);

} // namespace gs
