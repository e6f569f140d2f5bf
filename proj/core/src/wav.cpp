#include "silp/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace silp::wav {

namespace {

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

int16_t to_i16(double v) {
  const double scaled = std::lround(v * 32767.0);
  if (scaled > 32767.0) return 32767;
  if (scaled < -32768.0) return -32768;
  return static_cast<int16_t>(scaled);
}

}  // namespace

WavData read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path);

  uint16_t fmt_code = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = get_u32(bytes.data() + pos + 4);
    const uint8_t* body = bytes.data() + pos + 8;
    if (pos + 8 + len > bytes.size()) throw std::runtime_error("wav: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw std::runtime_error("wav: short fmt chunk in " + path);
      fmt_code = get_u16(body);
      channels = get_u16(body + 2);
      rate = get_u32(body + 4);
      bits = get_u16(body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data || channels == 0) throw std::runtime_error("wav: missing fmt/data chunk in " + path);
  if (channels > 2) throw std::runtime_error("wav: only mono/stereo supported: " + path);

  WavData out;
  out.sample_rate = static_cast<double>(rate);
  out.channels.resize(channels);

  if (fmt_code == 1 && bits == 16) {
    out.format = SampleFormat::Int16;
    const size_t n = data_len / 2 / channels;
    for (auto& ch : out.channels) ch.resize(n);
    for (size_t i = 0; i < n; ++i)
      for (uint16_t c = 0; c < channels; ++c) {
        const int16_t s = static_cast<int16_t>(get_u16(data + (i * channels + c) * 2));
        out.channels[c][i] = static_cast<double>(s) / 32767.0;
      }
  } else if (fmt_code == 3 && bits == 32) {
    out.format = SampleFormat::Float32;
    const size_t n = data_len / 4 / channels;
    for (auto& ch : out.channels) ch.resize(n);
    for (size_t i = 0; i < n; ++i)
      for (uint16_t c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, data + (i * channels + c) * 4, 4);
        out.channels[c][i] = static_cast<double>(v);
      }
  } else {
    throw std::runtime_error("wav: unsupported format (need 16-bit PCM or 32-bit float): " + path);
  }
  return out;
}

void write(const std::string& path, const WavData& data) {
  if (data.channels.empty() || data.channels.size() > 2)
    throw std::invalid_argument("wav: only mono/stereo supported");
  const size_t n = data.frames();
  for (const auto& ch : data.channels)
    if (ch.size() != n) throw std::invalid_argument("wav: channel length mismatch");

  const uint16_t channels = static_cast<uint16_t>(data.channels.size());
  const uint16_t bits = data.format == SampleFormat::Int16 ? 16 : 32;
  const uint16_t block = static_cast<uint16_t>(channels * bits / 8);
  const uint32_t rate = static_cast<uint32_t>(std::lround(data.sample_rate));
  const uint32_t data_len = static_cast<uint32_t>(n * block);

  std::string buf;
  buf.reserve(44 + data_len);
  buf += "RIFF";
  put_u32(buf, 36 + data_len);
  buf += "WAVEfmt ";
  put_u32(buf, 16);
  put_u16(buf, static_cast<uint16_t>(data.format));
  put_u16(buf, channels);
  put_u32(buf, rate);
  put_u32(buf, rate * block);
  put_u16(buf, block);
  put_u16(buf, bits);
  buf += "data";
  put_u32(buf, data_len);

  if (data.format == SampleFormat::Int16) {
    for (size_t i = 0; i < n; ++i)
      for (uint16_t c = 0; c < channels; ++c) {
        const int16_t s = to_i16(data.channels[c][i]);
        put_u16(buf, static_cast<uint16_t>(s));
      }
  } else {
    for (size_t i = 0; i < n; ++i)
      for (uint16_t c = 0; c < channels; ++c) {
        const float v = static_cast<float>(data.channels[c][i]);
        char raw[4];
        std::memcpy(raw, &v, 4);
        buf.append(raw, 4);
      }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("wav: cannot write " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("wav: write failed for " + path);
}

WavData make_stereo(const std::vector<double>& left, const std::vector<double>& right,
                    double sample_rate, SampleFormat fmt) {
  WavData d;
  d.channels = {left, right};
  d.sample_rate = sample_rate;
  d.format = fmt;
  return d;
}

}  // namespace silp::wav
