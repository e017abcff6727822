#pragma once

// On-disk subject format: one directory holding
//   manifest.json  subject_id, rate_hz, channel_names, n_samples, trials,
//                  dtype "f32le", sha256 checksums of both blobs
//   eeg.f32        channels x samples, row-major, little-endian float32
//   kin.f32        3 x samples, row-major, little-endian float32
//
// Values are stored as float32, so save/load is bit-exact only for data that
// is already float32-representable (load always returns such data).

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinetrace/dataset.hpp"
#include "kinetrace/errors.hpp"

namespace kinetrace::io {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kEegName = "eeg.f32";
inline constexpr const char* kKinName = "kin.f32";

inline std::string sha256_hex(const std::vector<unsigned char>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline std::vector<unsigned char> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const void* data, std::size_t size) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("short write to " + p.string());
}

inline void write_text(const fs::path& p, const std::string& s) { write_file(p, s.data(), s.size()); }

inline std::vector<unsigned char> encode_f32le(const std::vector<double>& values) {
  std::vector<unsigned char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return out;
}

inline std::vector<double> decode_f32le(const std::vector<unsigned char>& bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

inline void save_subject(const SubjectRecording& r, const fs::path& dir) {
  validate(r);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto eeg = encode_f32le(r.eeg.data());
  const auto kin = encode_f32le(r.kinematics.data());
  nlohmann::ordered_json m;
  m["subject_id"] = r.subject_id;
  m["rate_hz"] = r.rate_hz;
  m["channel_names"] = r.channel_names;
  m["n_samples"] = r.n_samples();
  auto trials = nlohmann::ordered_json::array();
  for (const auto& t : r.trials) trials.push_back({{"onset_sample", t.onset_sample}, {"end_sample", t.end_sample}});
  m["trials"] = trials;
  m["dtype"] = "f32le";
  m["checksums"] = {{kEegName, sha256_hex(eeg)}, {kKinName, sha256_hex(kin)}};
  if (r.band) m["band"] = *r.band;
  write_file(dir / kEegName, eeg.data(), eeg.size());
  write_file(dir / kKinName, kin.data(), kin.size());
  write_text(dir / kManifestName, m.dump(2) + "\n");
}

namespace detail {

inline std::vector<double> load_blob(const fs::path& dir, const char* name, std::size_t expected_values,
                                     const nlohmann::json& checksums) {
  const auto bytes = read_file(dir / name);
  if (bytes.size() != expected_values * 4)
    throw FormatError(std::string(name) + ": expected " + std::to_string(expected_values * 4) + " bytes, found " +
                      std::to_string(bytes.size()));
  if (!checksums.contains(name)) throw FormatError(std::string(name) + ": checksum missing from manifest");
  if (sha256_hex(bytes) != checksums.at(name).get<std::string>())
    throw FormatError(std::string(name) + ": checksum mismatch");
  return decode_f32le(bytes);
}

}  // namespace detail

inline SubjectRecording load_subject(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  const auto text = read_file(dir / kManifestName);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(kManifestName) + ": " + e.what());
  }
  SubjectRecording r;
  std::size_t n_samples = 0;
  nlohmann::json sums;
  try {
    if (m.at("dtype").get<std::string>() != "f32le") throw FormatError("manifest.json: unsupported dtype");
    r.subject_id = m.at("subject_id").get<std::string>();
    r.rate_hz = m.at("rate_hz").get<double>();
    r.channel_names = m.at("channel_names").get<std::vector<std::string>>();
    n_samples = m.at("n_samples").get<std::size_t>();
    for (const auto& t : m.at("trials"))
      r.trials.push_back({t.at("onset_sample").get<std::size_t>(), t.at("end_sample").get<std::size_t>()});
    if (m.contains("band")) r.band = m.at("band").get<std::string>();
    sums = m.at("checksums");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(kManifestName) + ": " + e.what());
  }
  const std::size_t C = r.channel_names.size();
  r.eeg = Matrix(C, n_samples, detail::load_blob(dir, kEegName, C * n_samples, sums));
  r.kinematics = Matrix(3, n_samples, detail::load_blob(dir, kKinName, 3 * n_samples, sums));
  validate(r);
  return r;
}

}  // namespace kinetrace::io
