#pragma once

#include "ctok/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctok {

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// float32 little-endian payloads, base64 wrapped. Values are rounded to
// float on the way out; decode widens back to double exactly.
std::string encode_f32(std::span<const double> values);
std::vector<double> decode_f32(std::string_view text);
void append_f32_le(std::vector<std::uint8_t>& out, double value);
double read_f32_le(const std::uint8_t* bytes);

inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }
Mat round_f32(const Mat& m);
Vec round_f32(const Vec& v);

// Hash of the raw float32 representation of a vector; stable across runs.
std::string fingerprint(const Vec& v);
std::string fingerprint(const Mat& m);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

Vec standard_normal(std::mt19937_64& rng, Eigen::Index n);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

}  // namespace ctok
