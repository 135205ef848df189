#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ron/assigner.hpp"
#include "ron/network.hpp"

namespace ron {

// One image plus its annotations. Pixels are 8-bit interleaved RGB,
// row-major, exactly the PPM payload.
struct Sample {
    std::string image_id;
    int size = 0;  // square
    std::vector<uint8_t> pixels;
    std::vector<GtObject> objects;
};

struct Dataset {
    int image_size = 0;
    std::vector<std::string> class_names;  // index 0 unused (background)
    std::vector<Sample> samples;
};

// Synthetic shapes: gray background, 1-4 high-contrast shapes per image
// (classes circle, square, triangle), log-uniform sizes from 8 px up to
// 0.8 * image_size. Deterministic per seed.
Dataset gen_shapes(int n, int image_size, uint64_t seed);

// --- image I/O (binary P6 PPM, 8-bit) ---
void write_ppm(const std::filesystem::path& path, int width, int height,
               const std::vector<uint8_t>& rgb);
std::vector<uint8_t> read_ppm(const std::filesystem::path& path, int& width, int& height);

// --- VOC XML annotations ---
// Coordinates on disk are 1-based inclusive (VOC convention); in memory
// boxes are 0-based half-open.
void write_voc_xml(const std::filesystem::path& path, const Sample& sample,
                   const std::vector<std::string>& class_names);
std::vector<GtObject> parse_voc_xml(const std::filesystem::path& path,
                                    const std::vector<std::string>& class_names,
                                    bool skip_difficult = true);

// --- dataset directory: images/, annotations/, manifest.json ---
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& manifest_or_dir);

// --- model weights: "RONW" header, named-parameter manifest, f32 LE ---
void save_weights(const std::filesystem::path& path, Model<float>& model);
void load_weights(const std::filesystem::path& path, Model<float>& model);

// Batch of images to a normalized input tensor: value/255 - 0.5.
Tensor<float> images_to_tensor(const std::vector<const std::vector<uint8_t>*>& images, int size);

inline Tensor<float> image_to_tensor(const std::vector<uint8_t>& pixels, int size) {
    return images_to_tensor({&pixels}, size);
}

// Bilinear resize of interleaved RGB.
std::vector<uint8_t> resize_rgb(const std::vector<uint8_t>& src, int sw, int sh, int dw, int dh);

}  // namespace ron
