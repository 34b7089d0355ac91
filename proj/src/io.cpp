#include "rgbdi/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rgbdi {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error(what);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void rename_into_place(const std::string& tmp, const std::string& path) {
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail("cannot rename " + tmp + " to " + path);
  }
}

void write_png_gray(const std::string& path, int width, int height,
                    int bit_depth, const std::vector<uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) fail("cannot open " + tmp + " for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    std::remove(tmp.c_str());
    fail("png write failed for " + path);
  }
  png_init_io(png, fp);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(width) * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(bytes.data() + y * stride);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  rename_into_place(tmp, path);
}

std::vector<uint8_t> read_png_gray(const std::string& path, int expect_depth,
                                   int* width, int* height) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) fail("cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    fail("png read failed for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(png, info) != expect_depth) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(path + ": expected " + std::to_string(expect_depth) +
         "-bit grayscale");
  }
  *width = png_get_image_width(png, info);
  *height = png_get_image_height(png, info);
  const size_t stride = static_cast<size_t>(*width) * (expect_depth / 8);
  std::vector<uint8_t> bytes(stride * *height);
  std::vector<png_bytep> rows(*height);
  for (int y = 0; y < *height; ++y) rows[y] = bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return bytes;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open " + tmp + " for writing");
    out << contents;
    if (!out.good()) fail("short write to " + tmp);
  }
  rename_into_place(tmp, path);
}

void write_intensity_png(const std::string& path, const ImageF& img) {
  std::vector<uint8_t> bytes(static_cast<size_t>(img.width) * img.height);
  for (size_t i = 0; i < bytes.size(); ++i) {
    const long v = std::lround(img.data[i]);
    bytes[i] = static_cast<uint8_t>(std::clamp(v, 0l, 255l));
  }
  write_png_gray(path, img.width, img.height, 8, bytes);
}

ImageF read_intensity_png(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> bytes = read_png_gray(path, 8, &w, &h);
  ImageF img(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i];
  return img;
}

void write_depth_png(const std::string& path, const ImageF& depth_m) {
  std::vector<uint8_t> bytes(static_cast<size_t>(depth_m.width) *
                             depth_m.height * 2);
  for (size_t i = 0; i < depth_m.data.size(); ++i) {
    const long v =
        std::clamp(std::lround(depth_m.data[i] * kDepthPngScale), 0l, 65535l);
    bytes[2 * i] = static_cast<uint8_t>(v >> 8);  // network byte order
    bytes[2 * i + 1] = static_cast<uint8_t>(v & 0xff);
  }
  write_png_gray(path, depth_m.width, depth_m.height, 16, bytes);
}

ImageF read_depth_png(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> bytes = read_png_gray(path, 16, &w, &h);
  ImageF img(w, h);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const unsigned v = (unsigned(bytes[2 * i]) << 8) | bytes[2 * i + 1];
    img.data[i] = static_cast<float>(v / kDepthPngScale);
  }
  return img;
}

void write_trajectory_tum(const std::string& path,
                          const std::vector<PoseKnot>& poses) {
  std::ostringstream out;
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char line[256];
  for (const PoseKnot& p : poses) {
    const Vec3& t = p.T.translation;
    const Quat& q = p.T.rotation;
    std::snprintf(line, sizeof(line),
                  "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", p.t, t.x(),
                  t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out << line;
  }
  atomic_write(path, out.str());
}

std::vector<PoseKnot> read_trajectory_tum(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<PoseKnot> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    PoseKnot p;
    double qx, qy, qz, qw;
    if (std::sscanf(s.c_str(), "%lf %lf %lf %lf %lf %lf %lf %lf", &p.t,
                    &p.T.translation.x(), &p.T.translation.y(),
                    &p.T.translation.z(), &qx, &qy, &qz, &qw) != 8) {
      fail(path + ":" + std::to_string(lineno) + ": malformed pose line");
    }
    p.T.rotation = Quat(qw, qx, qy, qz).normalized();
    poses.push_back(p);
  }
  return poses;
}

void write_imu_csv(const std::string& path,
                   const std::vector<ImuSample>& samples) {
  std::ostringstream out;
  out << "timestamp_s,gx,gy,gz,ax,ay,az\n";
  char line[256];
  for (const ImuSample& s : samples) {
    std::snprintf(line, sizeof(line),
                  "%.9f,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e\n", s.t, s.gyro.x(),
                  s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(),
                  s.accel.z());
    out << line;
  }
  atomic_write(path, out.str());
}

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<ImuSample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (lineno == 1 && s.rfind("timestamp", 0) == 0) continue;
    ImuSample m;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &m.t,
                    &m.gyro.x(), &m.gyro.y(), &m.gyro.z(), &m.accel.x(),
                    &m.accel.y(), &m.accel.z()) != 7) {
      fail(path + ":" + std::to_string(lineno) + ": malformed imu line");
    }
    samples.push_back(m);
  }
  return samples;
}

void write_state_csv(const std::string& path,
                     const std::vector<StateRecord>& states) {
  std::ostringstream out;
  out << "timestamp_s,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz\n";
  char line[320];
  for (const StateRecord& r : states) {
    std::snprintf(line, sizeof(line),
                  "%.9f,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e\n", r.t,
                  r.v_W.x(), r.v_W.y(), r.v_W.z(), r.bg.x(), r.bg.y(),
                  r.bg.z(), r.ba.x(), r.ba.y(), r.ba.z());
    out << line;
  }
  atomic_write(path, out.str());
}

std::vector<StateRecord> read_state_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<StateRecord> states;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (lineno == 1 && s.rfind("timestamp", 0) == 0) continue;
    StateRecord r;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf",
                    &r.t, &r.v_W.x(), &r.v_W.y(), &r.v_W.z(), &r.bg.x(),
                    &r.bg.y(), &r.bg.z(), &r.ba.x(), &r.ba.y(),
                    &r.ba.z()) != 10) {
      fail(path + ":" + std::to_string(lineno) + ": malformed state line");
    }
    states.push_back(r);
  }
  return states;
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    const size_t hash = s.find('#');
    if (hash != std::string::npos) s = trim(s.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        fail(origin + ":" + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) {
      fail(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      fail(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.kv_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  return parse(read_file(path), path);
}

std::string Config::serialize() const {
  std::ostringstream out;
  // sectionless keys must come before the first header
  for (const auto& [key, value] : kv_) {
    if (key.find('.') == std::string::npos) {
      out << key << " = " << value << "\n";
    }
  }
  std::string section;
  for (const auto& [key, value] : kv_) {
    const size_t dot = key.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (out.tellp() > 0) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  return out.str();
}

void Config::save(const std::string& path) const {
  atomic_write(path, serialize());
}

double Config::num(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    fail("config key " + key + " is not a number: " + it->second);
  }
}

int Config::integer(const std::string& key, int fallback) const {
  const double v = num(key, fallback);
  const int i = static_cast<int>(std::lround(v));
  if (std::abs(v - i) > 1e-9) fail("config key " + key + " is not integer");
  return i;
}

bool Config::flag(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  fail("config key " + key + " is not a boolean: " + v);
}

std::string Config::str(const std::string& key,
                        const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

void Config::set(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  kv_[key] = buf;
}

void Config::set(const std::string& key, int value) {
  kv_[key] = std::to_string(value);
}

void Config::set(const std::string& key, bool value) {
  kv_[key] = value ? "true" : "false";
}

}  // namespace rgbdi
