// Copyright 2026 The Ivex Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IVEX_WAV_HPP
#define IVEX_WAV_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivex/errors.hpp"

namespace ivex {

struct WavData {
  Eigen::MatrixXd samples;  // channels x T, nominal range [-1, 1]
  int sample_rate = 16000;
};

enum class WavFormat { f32, pcm16 };

namespace detail {

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  T out;
  std::memcpy(&out, &v, sizeof(T));
  return out;
}

template <typename T>
void write_le(std::ostream& os, T value) {
  std::uint64_t v = 0;
  std::memcpy(&v, &value, sizeof(T));
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

}  // namespace detail

inline WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw invalid_input_error("cannot open WAV file: " + path);
  char tag[4];
  is.read(tag, 4);
  if (!is || std::strncmp(tag, "RIFF", 4) != 0) throw invalid_input_error("not a RIFF file: " + path);
  detail::read_le<std::uint32_t>(is);
  is.read(tag, 4);
  if (!is || std::strncmp(tag, "WAVE", 4) != 0) throw invalid_input_error("not a WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (is && !(have_fmt && have_data)) {
    is.read(tag, 4);
    if (!is) break;
    const std::uint32_t size = detail::read_le<std::uint32_t>(is);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = detail::read_le<std::uint16_t>(is);
      channels = detail::read_le<std::uint16_t>(is);
      rate = detail::read_le<std::uint32_t>(is);
      detail::read_le<std::uint32_t>(is);  // byte rate
      detail::read_le<std::uint16_t>(is);  // block align
      bits = detail::read_le<std::uint16_t>(is);
      std::uint32_t consumed = 16;
      if (format == 0xFFFE && size >= 40) {
        detail::read_le<std::uint16_t>(is);  // extension size
        detail::read_le<std::uint16_t>(is);  // valid bits
        detail::read_le<std::uint32_t>(is);  // channel mask
        format = detail::read_le<std::uint16_t>(is);  // subformat GUID leads with the code
        is.ignore(14);
        consumed = 40;
      }
      if (size > consumed) is.ignore(size - consumed);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(size);
      is.read(data.data(), size);
      have_data = true;
      if (size % 2) is.ignore(1);
    } else {
      is.ignore(size + (size % 2));
    }
  }
  if (!have_fmt || !have_data) throw invalid_input_error("WAV missing fmt/data chunk: " + path);
  if (channels == 0) throw invalid_input_error("WAV with zero channels: " + path);
  const bool is_float = format == 3;
  if (!is_float && format != 1) throw invalid_input_error("unsupported WAV format code: " + path);
  if (is_float && bits != 32) throw invalid_input_error("only 32-bit float WAV supported: " + path);
  if (!is_float && bits != 16 && bits != 24) {
    throw invalid_input_error("only 16/24-bit PCM WAV supported: " + path);
  }

  const std::size_t bytes_per = bits / 8u;
  const std::size_t frames = data.size() / (bytes_per * channels);
  if (frames == 0) throw invalid_input_error("empty WAV data: " + path);
  WavData out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(channels, static_cast<Eigen::Index>(frames));
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      double v = 0.0;
      if (is_float) {
        float fv;
        std::memcpy(&fv, p, 4);
        v = fv;
      } else if (bits == 16) {
        const auto s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        v = s / 32768.0;
      } else {  // 24-bit
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      }
      out.samples(c, static_cast<Eigen::Index>(f)) = v;
      p += bytes_per;
    }
  }
  return out;
}

inline void write_wav(const std::string& path, const WavData& wav,
                      WavFormat format = WavFormat::f32) {
  if (wav.samples.size() == 0) throw invalid_input_error("write_wav: empty signal");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw invalid_input_error("cannot write WAV file: " + path);
  const auto channels = static_cast<std::uint16_t>(wav.samples.rows());
  const auto frames = static_cast<std::uint32_t>(wav.samples.cols());
  const std::uint16_t bits = format == WavFormat::f32 ? 32 : 16;
  const std::uint16_t fmt_code = format == WavFormat::f32 ? 3 : 1;
  const std::uint32_t data_bytes = frames * channels * (bits / 8u);

  os.write("RIFF", 4);
  detail::write_le<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_le<std::uint32_t>(os, 16);
  detail::write_le<std::uint16_t>(os, fmt_code);
  detail::write_le<std::uint16_t>(os, channels);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(wav.sample_rate));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(wav.sample_rate) * channels * (bits / 8u));
  detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(channels * (bits / 8u)));
  detail::write_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  detail::write_le<std::uint32_t>(os, data_bytes);
  for (std::uint32_t f = 0; f < frames; ++f) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const double v = wav.samples(c, static_cast<Eigen::Index>(f));
      if (format == WavFormat::f32) {
        detail::write_le<float>(os, static_cast<float>(v));
      } else {
        const double clipped = std::min(1.0, std::max(-1.0, v));
        detail::write_le<std::int16_t>(os, static_cast<std::int16_t>(std::lround(clipped * 32767.0)));
      }
    }
  }
  if (!os) throw invalid_input_error("short write: " + path);
}

}  // namespace ivex

#endif  // IVEX_WAV_HPP
