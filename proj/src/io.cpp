#include "adamae/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace adamae {

namespace bin {

void write_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void write_u16(std::string& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff),
                     static_cast<char>((v >> 8) & 0xff)};
  out.append(b, 2);
}

void write_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_f32(std::string& out, float v) {
  write_u32(out, std::bit_cast<std::uint32_t>(v));
}

void write_f64(std::string& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

void Reader::need(std::size_t n) {
  if (pos_ + n > buf_.size())
    throw IoError(what_ + ": truncated file (need " + std::to_string(n) +
                  " bytes at offset " + std::to_string(pos_) + ")");
}

std::uint16_t Reader::u16() {
  need(2);
  const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
  pos_ += 2;
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t Reader::u32() {
  need(4);
  const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
  pos_ += 4;
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  const auto* p = reinterpret_cast<const unsigned char*>(buf_.data() + pos_);
  pos_ += 8;
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::bytes(std::size_t n) {
  need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path);
  return data;
}

void spit(const std::string& path, const std::string& data) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace bin

// ---------------------------------------------------------------------------
// AVID
// ---------------------------------------------------------------------------

void write_avid(const std::string& path, const RawVideo& v) {
  check(v.data.size() == static_cast<std::size_t>(v.channels) * v.frames *
                             v.height * v.width,
        "avid: data length does not match header");
  std::string out;
  out.reserve(16 + v.data.size() * 4);
  out.append("AVID", 4);
  bin::write_u16(out, v.channels);
  bin::write_u16(out, v.frames);
  bin::write_u16(out, v.height);
  bin::write_u16(out, v.width);
  bin::write_u32(out, 0);  // reserved
  for (float x : v.data) bin::write_f32(out, x);
  bin::spit(path, out);
}

RawVideo read_avid(const std::string& path) {
  const std::string buf = bin::slurp(path);
  bin::Reader r(buf, path);
  if (r.bytes(4) != "AVID") throw IoError(path + ": bad AVID magic");
  RawVideo v;
  v.channels = r.u16();
  v.frames = r.u16();
  v.height = r.u16();
  v.width = r.u16();
  r.u32();  // reserved
  const std::size_t n = static_cast<std::size_t>(v.channels) * v.frames *
                        v.height * v.width;
  v.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) v.data[i] = r.f32();
  if (!r.exhausted()) throw IoError(path + ": trailing bytes");
  return v;
}

// ---------------------------------------------------------------------------
// Activity masks + labels
// ---------------------------------------------------------------------------

void write_activity_mask(const std::string& path, const ActivityMask& mask,
                         const PatchGeometry& geom) {
  check(mask.active.size() == geom.tokens,
        "mask length does not match geometry");
  std::string out;
  out.append("AMSK", 4);
  bin::write_u16(out, static_cast<std::uint16_t>(geom.grid_t));
  bin::write_u16(out, static_cast<std::uint16_t>(geom.grid_h));
  bin::write_u16(out, static_cast<std::uint16_t>(geom.grid_w));
  for (int i = 0; i < 6; ++i) out.push_back('\0');  // reserved
  for (std::uint8_t b : mask.active)
    out.push_back(static_cast<char>(b ? 1 : 0));
  bin::spit(path, out);
}

ActivityMask read_activity_mask(const std::string& path) {
  const std::string buf = bin::slurp(path);
  bin::Reader r(buf, path);
  if (r.bytes(4) != "AMSK") throw IoError(path + ": bad AMSK magic");
  const std::size_t gt = r.u16(), gh = r.u16(), gw = r.u16();
  r.bytes(6);  // reserved
  const std::string body = r.bytes(gt * gh * gw);
  if (!r.exhausted()) throw IoError(path + ": trailing bytes");
  ActivityMask m;
  m.active.reserve(body.size());
  for (char c : body) m.active.push_back(c ? 1 : 0);
  return m;
}

void write_labels_csv(const std::string& path,
                      const std::vector<std::string>& names,
                      const std::vector<Direction>& labels) {
  check(names.size() == labels.size(), "labels: name/label count mismatch");
  std::string out = "file,label,label_name\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    out += names[i];
    out += ',';
    out += std::to_string(static_cast<int>(labels[i]));
    out += ',';
    out += direction_name(labels[i]);
    out += '\n';
  }
  bin::spit(path, out);
}

std::vector<std::pair<std::string, Direction>> read_labels_csv(
    const std::string& path) {
  const std::string buf = bin::slurp(path);
  std::vector<std::pair<std::string, Direction>> out;
  std::size_t pos = 0;
  bool header = true;
  while (pos < buf.size()) {
    std::size_t end = buf.find('\n', pos);
    if (end == std::string::npos) end = buf.size();
    const std::string line = buf.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw IoError(path + ": malformed labels row: " + line);
    const int label = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
    if (label < 0 || label >= static_cast<int>(kDirectionClasses))
      throw IoError(path + ": label out of range: " + line);
    out.emplace_back(line.substr(0, c1), static_cast<Direction>(label));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<double>& values01, int bits) {
  check(values01.size() == width * height, "pgm: value count mismatch");
  check(bits == 8 || bits == 16, "pgm: bits must be 8 or 16");
  const int maxval = bits == 8 ? 255 : 65535;
  std::string out = "P5\n" + std::to_string(width) + " " +
                    std::to_string(height) + "\n" + std::to_string(maxval) +
                    "\n";
  for (double v : values01) {
    double c = v;
    if (c < 0.0) c = 0.0;
    if (c > 1.0) c = 1.0;
    const auto q = static_cast<unsigned>(c * maxval + 0.5);
    if (bits == 16) out.push_back(static_cast<char>((q >> 8) & 0xff));
    out.push_back(static_cast<char>(q & 0xff));
  }
  bin::spit(path, out);
}

void export_mask_image(const MaskSpec& mask, const PatchGeometry& geom,
                       const std::string& path) {
  check(mask.tokens() == geom.tokens, "mask does not match geometry");
  std::vector<double> px(mask.tokens());
  // white = visible, black = masked
  for (std::size_t i = 0; i < mask.tokens(); ++i)
    px[i] = mask.mask[i] ? 0.0 : 1.0;
  write_pgm(path, geom.grid_w, geom.grid_t * geom.grid_h, px);
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& s, const std::string& ctx) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("bad number '" + s + "' in " + ctx);
  return v;
}

}  // namespace

void export_metrics(const std::vector<StepMetrics>& metrics,
                    const std::string& path) {
  std::string out = "step,L_R,L_S,lr,fg_mass,ms_per_step\n";
  for (const StepMetrics& m : metrics) {
    out += std::to_string(m.step);
    out += ',';
    out += format_double(m.loss_recon);
    out += ',';
    out += format_double(m.loss_sampling);
    out += ',';
    out += format_double(m.lr);
    out += ',';
    out += format_double(m.fg_mass);
    out += ',';
    out += format_double(m.ms_per_step);
    out += '\n';
  }
  bin::spit(path, out);
}

std::vector<StepMetrics> read_metrics(const std::string& path) {
  const std::string buf = bin::slurp(path);
  std::vector<StepMetrics> out;
  std::size_t pos = 0;
  bool header = true;
  while (pos < buf.size()) {
    std::size_t end = buf.find('\n', pos);
    if (end == std::string::npos) end = buf.size();
    std::string line = buf.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != "step,L_R,L_S,lr,fg_mass,ms_per_step")
        throw IoError(path + ": unexpected metrics header: " + line);
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t p = 0;
    while (true) {
      const std::size_t c = line.find(',', p);
      if (c == std::string::npos) {
        cells.push_back(line.substr(p));
        break;
      }
      cells.push_back(line.substr(p, c - p));
      p = c + 1;
    }
    if (cells.size() != 6) throw IoError(path + ": malformed row: " + line);
    StepMetrics m;
    m.step = static_cast<std::uint64_t>(std::stoull(cells[0]));
    m.loss_recon = parse_double(cells[1], path);
    m.loss_sampling = parse_double(cells[2], path);
    m.lr = parse_double(cells[3], path);
    m.fg_mass = parse_double(cells[4], path);
    m.ms_per_step = parse_double(cells[5], path);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

std::string checkpoint_magic() { return "ADCK"; }

namespace detail {

std::string encode_checkpoint(const RawCheckpoint& ck) {
  std::string out;
  out.append("ADCK", 4);
  bin::write_u32(out, kCheckpointVersion);
  bin::write_u64(out, ck.config_json.size());
  out += ck.config_json;
  bin::write_u64(out, ck.step);
  for (std::uint64_t w : ck.rng_state) bin::write_u64(out, w);
  bin::write_u64(out, ck.opt_t);
  bin::write_u64(out, ck.entries.size());
  for (const auto& e : ck.entries) {
    bin::write_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    out.push_back(static_cast<char>(e.partition));
    out.push_back(static_cast<char>(e.weight_decay));
    out.push_back(static_cast<char>(e.shape.size()));
    for (std::size_t d : e.shape) bin::write_u64(out, d);
    for (double v : e.value) bin::write_f64(out, v);
    for (double v : e.m) bin::write_f64(out, v);
    for (double v : e.v) bin::write_f64(out, v);
  }
  out.append("KCDA", 4);  // trailer guards against truncation
  return out;
}

RawCheckpoint decode_checkpoint(const std::string& bytes) {
  bin::Reader r(bytes, "checkpoint");
  if (r.bytes(4) != "ADCK") throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " +
                  std::to_string(version));
  RawCheckpoint ck;
  ck.config_json = r.bytes(r.u64());
  ck.step = r.u64();
  for (auto& w : ck.rng_state) w = r.u64();
  ck.opt_t = r.u64();
  ck.entries.resize(r.u64());
  for (auto& e : ck.entries) {
    e.name = r.bytes(r.u16());
    e.partition = static_cast<std::uint8_t>(r.bytes(1)[0]);
    e.weight_decay = static_cast<std::uint8_t>(r.bytes(1)[0]);
    const auto ndim = static_cast<std::size_t>(r.bytes(1)[0]);
    e.shape.resize(ndim);
    std::size_t numel = 1;
    for (auto& d : e.shape) {
      d = r.u64();
      numel *= d;
    }
    e.value.resize(numel);
    for (auto& v : e.value) v = r.f64();
    e.m.resize(numel);
    for (auto& v : e.m) v = r.f64();
    e.v.resize(numel);
    for (auto& v : e.v) v = r.f64();
  }
  if (r.bytes(4) != "KCDA") throw IoError("checkpoint: bad trailer");
  if (!r.exhausted()) throw IoError("checkpoint: trailing bytes");
  return ck;
}

}  // namespace detail

}  // namespace adamae
