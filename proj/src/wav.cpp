#include "beamkit/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace beamkit {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}
void wr_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw IoError("read_wav: not a RIFF/WAVE file: " + path);

  uint16_t fmt_code = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    uint32_t chunk_len = rd_u32(buf.data() + pos + 4);
    const uint8_t* body = buf.data() + pos + 8;
    if (pos + 8 + chunk_len > buf.size())
      throw IoError("read_wav: truncated chunk in " + path);
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw IoError("read_wav: short fmt chunk");
      fmt_code = rd_u16(body);
      channels = rd_u16(body + 2);
      rate = rd_u32(body + 4);
      bits = rd_u16(body + 14);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (!data || channels == 0) throw IoError("read_wav: missing fmt/data chunk");
  if (!((fmt_code == 1 && bits == 16) || (fmt_code == 3 && bits == 32)))
    throw IoError("read_wav: unsupported format (need PCM16 or float32)");

  size_t bytes_per_sample = bits / 8;
  size_t n = data_len / (bytes_per_sample * channels);
  WavData out;
  out.sample_rate = rate;
  out.channels.assign(channels, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i) {
    for (uint16_t c = 0; c < channels; ++c) {
      const uint8_t* s = data + (i * channels + c) * bytes_per_sample;
      if (fmt_code == 1) {
        int16_t v = static_cast<int16_t>(rd_u16(s));
        out.channels[c][i] = v / 32768.0;
      } else {
        uint32_t u = rd_u32(s);
        float v;
        std::memcpy(&v, &u, 4);
        out.channels[c][i] = v;
      }
    }
  }
  return out;
}

void write_wav(const std::string& path, const Waveform& channels,
               double sample_rate, WavFormat format) {
  if (channels.empty()) throw InvalidArgument("write_wav: no channels");
  size_t n = channels[0].size();
  for (const auto& ch : channels)
    if (ch.size() != n) throw ShapeError("write_wav: channel length mismatch");

  uint16_t nch = static_cast<uint16_t>(channels.size());
  uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  uint16_t code = format == WavFormat::Pcm16 ? 1 : 3;
  uint32_t byte_rate = static_cast<uint32_t>(sample_rate) * nch * bits / 8;
  uint32_t data_len = static_cast<uint32_t>(n * nch * bits / 8);

  std::vector<uint8_t> b;
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wr_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(b, 16);
  wr_u16(b, code);
  wr_u16(b, nch);
  wr_u32(b, static_cast<uint32_t>(sample_rate));
  wr_u32(b, byte_rate);
  wr_u16(b, nch * bits / 8);
  wr_u16(b, bits);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wr_u32(b, data_len);

  for (size_t i = 0; i < n; ++i) {
    for (uint16_t c = 0; c < nch; ++c) {
      double v = channels[c][i];
      if (format == WavFormat::Pcm16) {
        double s = v * 32768.0;
        if (s > 32767.0) s = 32767.0;
        if (s < -32768.0) s = -32768.0;
        wr_u16(b, static_cast<uint16_t>(static_cast<int16_t>(std::lrint(s))));
      } else {
        float fv = static_cast<float>(v);
        uint32_t u;
        std::memcpy(&u, &fv, 4);
        wr_u32(b, u);
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_wav: cannot open " + path);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw IoError("write_wav: write failed for " + path);
}

}  // namespace beamkit
