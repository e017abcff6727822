#pragma once

// Standalone model file:
//   bytes 0..7   magic "KTMODEL1"
//   bytes 8..15  header length H, little-endian uint64
//   next H bytes JSON header (architecture, L, N, lag spec, band, channels,
//                preprocessing, normalization, parameter manifest)
//   remainder    flat little-endian float64 parameter blob in manifest order

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinetrace/dataset.hpp"
#include "kinetrace/decoders/mlr.hpp"
#include "kinetrace/decoders/networks.hpp"
#include "kinetrace/decoders/train.hpp"
#include "kinetrace/interchange.hpp"
#include "kinetrace/preprocess.hpp"

namespace kinetrace::decoders {

inline constexpr char kModelMagic[8] = {'K', 'T', 'M', 'O', 'D', 'E', 'L', '1'};

struct ModelHeader {
  DecoderKind kind = DecoderKind::mlr;
  LagWindowSpec spec;
  std::vector<std::string> channel_names;
  preprocess::PreprocessConfig preprocessing;
  preprocess::Normalization normalization;
};

struct TrainedModel {
  ModelHeader header;
  std::variant<MlrModel, NeuralDecoder> model;

  Matrix predict(const Matrix& X) {
    if (auto* m = std::get_if<MlrModel>(&model)) return predict_mlr(*m, X);
    return decoders::predict(std::get<NeuralDecoder>(model), X);
  }
};

namespace detail {

inline void append_f64(std::vector<unsigned char>& blob, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) blob.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

inline double read_f64(const std::vector<unsigned char>& blob, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(blob[offset + b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

inline nlohmann::ordered_json header_json(const ModelHeader& h) {
  nlohmann::ordered_json j;
  j["format"] = "kinetrace-model";
  j["version"] = 1;
  j["kind"] = std::string(to_string(h.kind));
  j["lag_spec"] = {{"lag_far_ms", h.spec.lag_far_ms}, {"lag_near_ms", h.spec.lag_near_ms}, {"rate_hz", h.spec.rate_hz}};
  j["lags"] = h.spec.length();
  j["channels"] = h.channel_names.size();
  j["channel_names"] = h.channel_names;
  const auto& p = h.preprocessing;
  j["preprocessing"] = {{"rereference", p.rereference},
                        {"kin_lowpass_hz", p.kin_lowpass_hz},
                        {"downsample_factor", p.downsample_factor},
                        {"band", p.band ? nlohmann::ordered_json(signal::to_string(*p.band)) : nlohmann::ordered_json()},
                        {"num_taps", p.num_taps ? nlohmann::ordered_json(*p.num_taps) : nlohmann::ordered_json()}};
  auto zs = nlohmann::ordered_json::array();
  for (const auto& z : h.normalization.eeg) zs.push_back({z.mean, z.std});
  auto mm = nlohmann::ordered_json::array();
  for (const auto& m : h.normalization.kin) mm.push_back({m.min, m.max});
  j["normalization"] = {{"eeg_zscore", zs}, {"kin_minmax", mm}};
  return j;
}

inline ModelHeader parse_header(const nlohmann::json& j) {
  ModelHeader h;
  h.kind = parse_decoder(j.at("kind").get<std::string>());
  const auto& ls = j.at("lag_spec");
  h.spec = {ls.at("lag_far_ms").get<double>(), ls.at("lag_near_ms").get<double>(), ls.at("rate_hz").get<double>()};
  h.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  const auto& p = j.at("preprocessing");
  h.preprocessing.channels = h.channel_names;
  h.preprocessing.rereference = p.at("rereference").get<bool>();
  h.preprocessing.kin_lowpass_hz = p.at("kin_lowpass_hz").get<double>();
  h.preprocessing.downsample_factor = p.at("downsample_factor").get<std::size_t>();
  if (!p.at("band").is_null()) h.preprocessing.band = signal::parse_band(p.at("band").get<std::string>());
  if (!p.at("num_taps").is_null()) h.preprocessing.num_taps = p.at("num_taps").get<std::size_t>();
  for (const auto& z : j.at("normalization").at("eeg_zscore"))
    h.normalization.eeg.push_back({z.at(0).get<double>(), z.at(1).get<double>()});
  const auto& mm = j.at("normalization").at("kin_minmax");
  if (mm.size() != 3) throw FormatError("model header: kin_minmax must have 3 entries");
  for (std::size_t a = 0; a < 3; ++a) h.normalization.kin[a] = {mm.at(a).at(0).get<double>(), mm.at(a).at(1).get<double>()};
  return h;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_model(TrainedModel& m) {
  auto header = detail::header_json(m.header);
  std::vector<unsigned char> blob;
  if (auto* mlr = std::get_if<MlrModel>(&m.model)) {
    header["rank_deficient"] = mlr->rank_deficient;
    header["parameters"] = nlohmann::ordered_json::array(
        {{{"name", "alpha"}, {"shape", {3}}}, {{"name", "beta"}, {"shape", {3, mlr->beta.cols()}}}});
    for (double v : mlr->alpha) detail::append_f64(blob, v);
    for (double v : mlr->beta.data()) detail::append_f64(blob, v);
  } else {
    auto& net = std::get<NeuralDecoder>(m.model);
    auto state = nn::export_state(net.net);
    header["parameters"] = state.manifest;
    blob = std::move(state.blob);
  }
  const std::string text = header.dump();
  std::vector<unsigned char> out(kModelMagic, kModelMagic + 8);
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(len >> (8 * b)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

inline void save_model(TrainedModel& m, const std::filesystem::path& path) {
  const auto bytes = serialize_model(m);
  io::write_file(path, bytes.data(), bytes.size());
}

inline TrainedModel deserialize_model(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || !std::equal(kModelMagic, kModelMagic + 8, bytes.begin()))
    throw FormatError("model file: bad magic");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(bytes[8 + b]) << (8 * b);
  if (16 + len > bytes.size()) throw FormatError("model file: truncated header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  const std::vector<unsigned char> blob(bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len), bytes.end());
  TrainedModel m;
  try {
    m.header = detail::parse_header(j);
    const std::size_t L = j.at("lags").get<std::size_t>();
    const std::size_t N = j.at("channels").get<std::size_t>();
    if (L != m.header.spec.length() || N != m.header.channel_names.size())
      throw FormatError("model file: (L, N) disagree with lag spec / channel list");
    if (m.header.kind == DecoderKind::mlr) {
      const std::size_t P = L * N;
      if (blob.size() != 8 * (3 + 3 * P)) throw FormatError("model file: mlr blob has the wrong size");
      MlrModel mlr;
      mlr.rank_deficient = j.at("rank_deficient").get<bool>();
      for (std::size_t d = 0; d < 3; ++d) mlr.alpha[d] = detail::read_f64(blob, 8 * d);
      mlr.beta = Matrix(3, P);
      for (std::size_t i = 0; i < 3 * P; ++i) mlr.beta.data()[i] = detail::read_f64(blob, 8 * (3 + i));
      m.model = std::move(mlr);
    } else {
      auto net = build_network(m.header.kind, L, N, 0);
      nn::import_state(net.net, j.at("parameters"), blob);
      m.model = std::move(net);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  return m;
}

inline TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

}  // namespace kinetrace::decoders
