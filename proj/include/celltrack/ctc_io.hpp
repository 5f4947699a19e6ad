#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "celltrack/errors.hpp"
#include "celltrack/raster.hpp"
#include "celltrack/tracker.hpp"

namespace celltrack {

// ---------------------------------------------------------------- byte io --

namespace io_detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

struct Writer {
  std::vector<std::uint8_t> bytes;
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    bytes.push_back(v & 0xff);
    bytes.push_back((v >> 8) & 0xff);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  const std::string name;

  std::uint8_t u8(std::size_t off) const {
    check(off, 1);
    return bytes[off];
  }
  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    return static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
  }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    return static_cast<std::uint32_t>(bytes[off]) | (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
  }
  void check(std::size_t off, std::size_t n) const {
    if (off + n > bytes.size())
      throw FormatError(name + ": truncated at byte offset " + std::to_string(off));
  }
};

inline std::vector<std::uint8_t> deflate_bytes(const std::uint8_t* src, std::size_t n) {
  uLongf bound = compressBound(static_cast<uLong>(n));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, src, static_cast<uLong>(n), 6) != Z_OK)
    throw FormatError("deflate failed");
  out.resize(bound);
  return out;
}

inline void inflate_bytes(const std::uint8_t* src, std::size_t n, std::uint8_t* dst,
                          std::size_t expected, const std::string& name) {
  uLongf out_len = static_cast<uLongf>(expected);
  const int rc = uncompress(dst, &out_len, src, static_cast<uLong>(n));
  if (rc != Z_OK || out_len != expected)
    throw FormatError(name + ": corrupt deflate stream");
}

}  // namespace io_detail

// ------------------------------------------------------------------- tiff --
// Grayscale single-plane TIFF, little-endian, 8 or 16 bits per sample,
// uncompressed or deflate. The writer emits 16-bit single-strip files with
// deflate by default; the uncompressed fallback exists for consumers that
// cannot inflate. Writers are deterministic: same raster, same bytes.

namespace io_detail {

inline std::vector<std::uint8_t> encode_gray16_tiff(const std::vector<std::uint16_t>& px, int w,
                                                    int h, bool compressed) {
  std::vector<std::uint8_t> raw(px.size() * 2);
  for (std::size_t i = 0; i < px.size(); ++i) {
    raw[2 * i] = px[i] & 0xff;
    raw[2 * i + 1] = (px[i] >> 8) & 0xff;
  }
  std::vector<std::uint8_t> strip = compressed ? deflate_bytes(raw.data(), raw.size()) : std::move(raw);

  Writer out;
  out.u8('I');
  out.u8('I');
  out.u16(42);
  out.u32(8);  // first IFD immediately after the header

  const std::uint32_t n_entries = 10;
  const std::uint32_t data_offset = 8 + 2 + n_entries * 12 + 4;
  out.u16(static_cast<std::uint16_t>(n_entries));
  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
    out.u16(tag);
    out.u16(type);
    out.u32(count);
    if (type == 3 && count == 1) {  // SHORT packs into the low half
      out.u16(static_cast<std::uint16_t>(value));
      out.u16(0);
    } else {
      out.u32(value);
    }
  };
  entry(256, 4, 1, static_cast<std::uint32_t>(w));               // ImageWidth
  entry(257, 4, 1, static_cast<std::uint32_t>(h));               // ImageLength
  entry(258, 3, 1, 16);                                          // BitsPerSample
  entry(259, 3, 1, compressed ? 8 : 1);                          // Compression
  entry(262, 3, 1, 1);                                           // Photometric: BlackIsZero
  entry(273, 4, 1, data_offset);                                 // StripOffsets
  entry(277, 3, 1, 1);                                           // SamplesPerPixel
  entry(278, 4, 1, static_cast<std::uint32_t>(h));               // RowsPerStrip
  entry(279, 4, 1, static_cast<std::uint32_t>(strip.size()));    // StripByteCounts
  entry(339, 3, 1, 1);                                           // SampleFormat: unsigned
  out.u32(0);                                                    // no next IFD
  out.raw(strip.data(), strip.size());
  return out.bytes;
}

struct GrayImage {
  int width = 0, height = 0, bits = 0;
  std::vector<std::uint16_t> px;  // 8-bit samples widened
};

inline GrayImage decode_gray_tiff(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  Reader in{bytes, name};
  if (in.u8(0) != 'I' || in.u8(1) != 'I')
    throw FormatError(name + ": not a little-endian TIFF (bad magic at byte offset 0)");
  if (in.u16(2) != 42) throw FormatError(name + ": bad TIFF version at byte offset 2");
  const std::uint32_t ifd = in.u32(4);
  const std::uint16_t n = in.u16(ifd);

  struct Entry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::uint32_t inline_off = 0;  // offset of the 4-byte value field
  };
  std::map<std::uint16_t, Entry> entries;
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::size_t off = ifd + 2 + static_cast<std::size_t>(i) * 12;
    entries[in.u16(off)] = Entry{in.u16(off + 2), in.u32(off + 4), static_cast<std::uint32_t>(off + 8)};
  }

  auto type_size = [&](std::uint16_t type) -> std::size_t {
    switch (type) {
      case 1: return 1;  // BYTE
      case 3: return 2;  // SHORT
      case 4: return 4;  // LONG
      default: throw FormatError(name + ": unsupported TIFF field type " + std::to_string(type));
    }
  };
  auto values = [&](std::uint16_t tag) -> std::vector<std::uint32_t> {
    const Entry& e = entries.at(tag);
    const std::size_t sz = type_size(e.type);
    const std::size_t total = sz * e.count;
    std::size_t base = total <= 4 ? e.inline_off : in.u32(e.inline_off);
    std::vector<std::uint32_t> out(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
      if (sz == 1)
        out[i] = in.u8(base + i);
      else if (sz == 2)
        out[i] = in.u16(base + 2 * i);
      else
        out[i] = in.u32(base + 4 * i);
    }
    return out;
  };
  auto scalar = [&](std::uint16_t tag, std::uint32_t fallback, bool required = false) {
    if (!entries.count(tag)) {
      if (required) throw FormatError(name + ": missing required TIFF tag " + std::to_string(tag));
      return fallback;
    }
    return values(tag).at(0);
  };

  GrayImage img;
  img.width = static_cast<int>(scalar(256, 0, true));
  img.height = static_cast<int>(scalar(257, 0, true));
  img.bits = static_cast<int>(scalar(258, 1));
  const std::uint32_t compression = scalar(259, 1);
  const std::uint32_t samples = scalar(277, 1);
  const std::uint32_t rows_per_strip = scalar(278, static_cast<std::uint32_t>(img.height));
  const std::uint32_t sample_format = scalar(339, 1);

  if (img.width < 1 || img.height < 1) throw FormatError(name + ": bad image extent");
  if (samples != 1) throw FormatError(name + ": expected single-channel grayscale");
  if (img.bits != 8 && img.bits != 16)
    throw FormatError(name + ": expected 8 or 16 bits per sample, got " + std::to_string(img.bits));
  if (sample_format != 1) throw FormatError(name + ": expected unsigned integer samples");
  if (compression != 1 && compression != 8 && compression != 32946)
    throw FormatError(name + ": unsupported compression " + std::to_string(compression));
  if (!entries.count(273) || !entries.count(279))
    throw FormatError(name + ": missing strip tags");

  const std::vector<std::uint32_t> offsets = values(273);
  const std::vector<std::uint32_t> counts = values(279);
  if (offsets.size() != counts.size()) throw FormatError(name + ": strip tag count mismatch");
  if (rows_per_strip < 1) throw FormatError(name + ": bad RowsPerStrip");

  const std::size_t bytes_per_px = img.bits / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * bytes_per_px;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.height) * row_bytes);
  std::size_t row = 0;
  for (std::size_t s = 0; s < offsets.size(); ++s) {
    const std::size_t rows_here =
        std::min<std::size_t>(rows_per_strip, static_cast<std::size_t>(img.height) - row);
    if (rows_here == 0) throw FormatError(name + ": more strips than image rows");
    const std::size_t expected = rows_here * row_bytes;
    in.check(offsets[s], counts[s]);
    std::uint8_t* dst = raw.data() + row * row_bytes;
    if (compression == 1) {
      if (counts[s] != expected)
        throw FormatError(name + ": strip " + std::to_string(s) + " has wrong byte count at offset " +
                          std::to_string(offsets[s]));
      std::memcpy(dst, bytes.data() + offsets[s], expected);
    } else {
      inflate_bytes(bytes.data() + offsets[s], counts[s], dst, expected, name);
    }
    row += rows_here;
  }
  if (row != static_cast<std::size_t>(img.height))
    throw FormatError(name + ": strips cover " + std::to_string(row) + " of " +
                      std::to_string(img.height) + " rows");

  img.px.resize(static_cast<std::size_t>(img.width) * img.height);
  if (img.bits == 8) {
    for (std::size_t i = 0; i < img.px.size(); ++i) img.px[i] = raw[i];
  } else {
    for (std::size_t i = 0; i < img.px.size(); ++i)
      img.px[i] = static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
  }
  return img;
}

}  // namespace io_detail

inline void write_label_tiff(const LabelMap& map, const std::filesystem::path& path,
                             bool compressed = true) {
  std::vector<std::uint16_t> px(map.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const std::uint32_t v = map.storage()[i];
    if (v > 0xffff)
      throw std::range_error("write_label_tiff: label " + std::to_string(v) +
                             " exceeds 16-bit range");
    px[i] = static_cast<std::uint16_t>(v);
  }
  io_detail::write_file(path, io_detail::encode_gray16_tiff(px, map.width(), map.height(), compressed));
}

inline LabelMap read_label_tiff(const std::filesystem::path& path) {
  const auto img = io_detail::decode_gray_tiff(io_detail::read_file(path), path.string());
  LabelMap map(img.width, img.height);
  for (std::size_t i = 0; i < img.px.size(); ++i) map.storage()[i] = img.px[i];
  return map;
}

inline void write_image_tiff(const ImageF& image, const std::filesystem::path& path,
                             bool compressed = true) {
  std::vector<std::uint16_t> px(image.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image.storage()[i]), 0.0, 1.0);
    px[i] = static_cast<std::uint16_t>(std::llround(v * 65535.0));
  }
  io_detail::write_file(path,
                        io_detail::encode_gray16_tiff(px, image.width(), image.height(), compressed));
}

inline ImageF read_image_tiff(const std::filesystem::path& path) {
  const auto img = io_detail::decode_gray_tiff(io_detail::read_file(path), path.string());
  ImageF out(img.width, img.height);
  const float scale = img.bits == 8 ? 1.0f / 255.0f : 1.0f / 65535.0f;
  for (std::size_t i = 0; i < img.px.size(); ++i) out.storage()[i] = img.px[i] * scale;
  return out;
}

// ------------------------------------------------------------- track file --
// One record per line: "L B E P". L = track label, B/E = first/last frame,
// P = parent label or 0.

struct TrackRecord {
  std::uint32_t label = 0;
  int begin = 0;
  int end = 0;
  std::uint32_t parent = 0;
};

inline void write_track_file(const std::vector<TrackRecord>& records,
                             const std::filesystem::path& path) {
  std::set<std::uint32_t> seen;
  std::ostringstream out;
  for (const TrackRecord& r : records) {
    if (r.label == 0) throw std::invalid_argument("write_track_file: label must be >= 1");
    if (r.begin > r.end) throw std::invalid_argument("write_track_file: begin > end");
    if (r.parent == r.label) throw std::invalid_argument("write_track_file: track is its own parent");
    if (!seen.insert(r.label).second)
      throw std::invalid_argument("write_track_file: duplicate label " + std::to_string(r.label));
    out << r.label << ' ' << r.begin << ' ' << r.end << ' ' << r.parent << '\n';
  }
  const std::string s = out.str();
  std::vector<std::uint8_t> bytes(s.begin(), s.end());
  io_detail::write_file(path, bytes);
}

inline std::vector<TrackRecord> read_track_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<TrackRecord> records;
  std::set<std::uint32_t> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long label, begin, end, parent;
    std::string extra;
    if (!(ls >> label >> begin >> end >> parent) || (ls >> extra))
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        ": expected \"L B E P\"");
    if (label < 1 || label > 0xffffffffLL)
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": bad label");
    if (begin > end)
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": begin > end");
    if (parent < 0 || parent == label)
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": bad parent");
    if (!seen.insert(static_cast<std::uint32_t>(label)).second)
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": duplicate label");
    records.push_back({static_cast<std::uint32_t>(label), static_cast<int>(begin),
                       static_cast<int>(end), static_cast<std::uint32_t>(parent)});
  }
  return records;
}

// ------------------------------------------------------- raster container --
// Minimal versioned carrier for probability maps crossing the detector
// boundary: magic "CTKR", version u8, dtype u8 (0=u8, 1=u16, 2=f32),
// width/height/channels u32 LE, then the row-major channel-interleaved
// payload, little-endian.

namespace io_detail {

template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<std::uint8_t> {
  static constexpr std::uint8_t value = 0;
};
template <>
struct DtypeCode<std::uint16_t> {
  static constexpr std::uint8_t value = 1;
};
template <>
struct DtypeCode<float> {
  static constexpr std::uint8_t value = 2;
};

}  // namespace io_detail

inline constexpr char kRasterMagic[4] = {'C', 'T', 'K', 'R'};
inline constexpr std::uint8_t kRasterVersion = 1;

template <typename T>
void write_raster_container(const Raster<T>& raster, const std::filesystem::path& path) {
  io_detail::Writer out;
  out.raw(kRasterMagic, 4);
  out.u8(kRasterVersion);
  out.u8(io_detail::DtypeCode<T>::value);
  out.u32(static_cast<std::uint32_t>(raster.width()));
  out.u32(static_cast<std::uint32_t>(raster.height()));
  out.u32(static_cast<std::uint32_t>(raster.channels()));
  for (const T v : raster.storage()) {
    if constexpr (sizeof(T) == 1) {
      out.u8(static_cast<std::uint8_t>(v));
    } else if constexpr (sizeof(T) == 2) {
      out.u16(static_cast<std::uint16_t>(v));
    } else {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      out.u32(bits);
    }
  }
  io_detail::write_file(path, out.bytes);
}

namespace io_detail {

struct ContainerHeader {
  std::uint8_t dtype = 0;
  int width = 0, height = 0, channels = 0;
  std::size_t payload_off = 0;
};

inline ContainerHeader read_container_header(const Reader& in) {
  for (int i = 0; i < 4; ++i)
    if (in.u8(i) != static_cast<std::uint8_t>(kRasterMagic[i]))
      throw FormatError(in.name + ": bad magic at byte offset 0");
  if (in.u8(4) != kRasterVersion)
    throw FormatError(in.name + ": unsupported container version " + std::to_string(in.u8(4)));
  ContainerHeader h;
  h.dtype = in.u8(5);
  if (h.dtype > 2) throw FormatError(in.name + ": unknown dtype code at byte offset 5");
  h.width = static_cast<int>(in.u32(6));
  h.height = static_cast<int>(in.u32(10));
  h.channels = static_cast<int>(in.u32(14));
  h.payload_off = 18;
  if (h.width < 1 || h.height < 1 || h.channels < 1)
    throw FormatError(in.name + ": bad raster extent in header");
  const std::size_t dtype_size = h.dtype == 2 ? 4 : (h.dtype == 1 ? 2 : 1);
  const std::size_t expected =
      h.payload_off + static_cast<std::size_t>(h.width) * h.height * h.channels * dtype_size;
  if (in.bytes.size() != expected)
    throw FormatError(in.name + ": payload length " + std::to_string(in.bytes.size() - h.payload_off) +
                      " does not match header");
  return h;
}

}  // namespace io_detail

template <typename T>
Raster<T> read_raster_container(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  const io_detail::Reader in{bytes, path.string()};
  const auto h = io_detail::read_container_header(in);
  if (h.dtype != io_detail::DtypeCode<T>::value)
    throw FormatError(path.string() + ": container dtype " + std::to_string(h.dtype) +
                      " does not match requested type");
  Raster<T> raster(h.width, h.height, h.channels);
  for (std::size_t i = 0; i < raster.size(); ++i) {
    if constexpr (sizeof(T) == 1) {
      raster.storage()[i] = static_cast<T>(in.u8(h.payload_off + i));
    } else if constexpr (sizeof(T) == 2) {
      raster.storage()[i] = static_cast<T>(in.u16(h.payload_off + 2 * i));
    } else {
      const std::uint32_t bits = in.u32(h.payload_off + 4 * i);
      float v;
      std::memcpy(&v, &bits, 4);
      raster.storage()[i] = v;
    }
  }
  return raster;
}

// Probability-map ingestion accepts any container dtype and normalizes to
// float in [0, 1] (u8 / 255, u16 / 65535, f32 as-is).
inline ProbMap read_probmap(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  const io_detail::Reader in{bytes, path.string()};
  const auto h = io_detail::read_container_header(in);
  ProbMap map(h.width, h.height, h.channels);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (h.dtype == 0)
      map.storage()[i] = in.u8(h.payload_off + i) / 255.0f;
    else if (h.dtype == 1)
      map.storage()[i] = in.u16(h.payload_off + 2 * i) / 65535.0f;
    else {
      const std::uint32_t bits = in.u32(h.payload_off + 4 * i);
      float v;
      std::memcpy(&v, &bits, 4);
      map.storage()[i] = v;
    }
  }
  return map;
}

// ----------------------------------------------------------------- layout --

// Cell Tracking Challenge directory conventions rooted at a dataset dir.
struct SequenceLayout {
  std::filesystem::path root;
  std::string sequence = "01";

  std::filesystem::path images_dir() const { return root / sequence; }
  std::filesystem::path gt_tra_dir() const { return root / (sequence + "_GT") / "TRA"; }
  std::filesystem::path gt_seg_dir() const { return root / (sequence + "_GT") / "SEG"; }
  std::filesystem::path prob_dir() const { return root / (sequence + "_PROB"); }
  std::filesystem::path res_dir() const { return root / (sequence + "_RES"); }
};

inline std::string frame_name(const char* prefix, int frame, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%03d%s", prefix, frame, ext);
  return buf;
}

// Number of consecutive frames prefix000.ext, prefix001.ext, ... present.
inline int count_frames(const std::filesystem::path& dir, const char* prefix, const char* ext) {
  int n = 0;
  while (std::filesystem::exists(dir / frame_name(prefix, n, ext))) ++n;
  return n;
}

// ---------------------------------------------------------- forest export --

inline std::vector<TrackRecord> forest_records(const LineageForest& forest) {
  std::vector<TrackRecord> records;
  for (const auto& [id, t] : forest.trajectories) {
    if (t.rows.empty()) continue;
    records.push_back({id, t.start_frame(), t.end_frame(), t.parent});
  }
  return records;
}

// Writes mask%03d.tif (pixel values = track labels) plus res_track.txt.
// Labels appearing in a mask must lie inside their record's [B, E] span.
inline void export_forest(const LineageForest& forest, const std::vector<LabelMap>& instance_maps,
                          const std::filesystem::path& res_dir) {
  const std::vector<TrackRecord> records = forest_records(forest);
  std::map<std::uint32_t, std::pair<int, int>> spans;
  for (const TrackRecord& r : records) spans[r.label] = {r.begin, r.end};

  for (int f = 0; f < static_cast<int>(instance_maps.size()); ++f) {
    std::set<std::uint32_t> offending;
    for (const std::uint32_t v : instance_maps[f].storage()) {
      if (v == 0) continue;
      const auto it = spans.find(v);
      if (it == spans.end() || f < it->second.first || f > it->second.second) offending.insert(v);
    }
    if (!offending.empty()) {
      std::string msg = "export_forest: frame " + std::to_string(f) + " has labels outside track spans:";
      for (const std::uint32_t v : offending) msg += " " + std::to_string(v);
      throw ConsistencyError(msg);
    }
  }
  for (const TrackRecord& r : records)
    if (r.end >= static_cast<int>(instance_maps.size()))
      throw ConsistencyError("export_forest: track " + std::to_string(r.label) +
                             " extends past the mask sequence");

  std::filesystem::create_directories(res_dir);
  for (int f = 0; f < static_cast<int>(instance_maps.size()); ++f)
    write_label_tiff(instance_maps[f], res_dir / frame_name("mask", f, ".tif"));
  write_track_file(records, res_dir / "res_track.txt");
}

// Rebuilds a forest from a track file plus label masks. Row positions come
// from per-frame mask centroids; frames inside a span with no pixels carry
// the nearest known centroid. Classes are not stored in this format and
// default to Normal.
inline LineageForest import_forest(const std::filesystem::path& dir, const char* mask_prefix,
                                   const char* track_filename) {
  const auto records = read_track_file(dir / track_filename);
  const int frames = count_frames(dir, mask_prefix, ".tif");

  std::map<std::uint32_t, std::map<int, std::pair<double, double>>> centroids;
  for (int f = 0; f < frames; ++f) {
    const LabelMap mask = read_label_tiff(dir / frame_name(mask_prefix, f, ".tif"));
    std::map<std::uint32_t, std::array<double, 3>> acc;  // x sum, y sum, n
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) {
        const std::uint32_t v = mask.at(x, y);
        if (v == 0) continue;
        auto& a = acc[v];
        a[0] += x;
        a[1] += y;
        a[2] += 1;
      }
    }
    for (const auto& [label, a] : acc) centroids[label][f] = {a[0] / a[2], a[1] / a[2]};
  }

  std::set<std::uint32_t> labels;
  for (const TrackRecord& r : records) labels.insert(r.label);
  LineageForest forest;
  for (const TrackRecord& r : records) {
    if (r.parent != 0 && !labels.count(r.parent))
      throw ConsistencyError("import_forest: track " + std::to_string(r.label) +
                             " references unknown parent " + std::to_string(r.parent));
    if (r.end >= frames)
      throw ConsistencyError("import_forest: track " + std::to_string(r.label) +
                             " span exceeds available masks");
    Trajectory t;
    t.id = r.label;
    t.parent = r.parent;
    t.state = TrackState::Terminated;
    const auto& known = centroids[r.label];
    std::pair<double, double> last{0.0, 0.0};
    bool have_last = false;
    if (!known.empty()) {
      last = known.begin()->second;  // leading gaps borrow the first centroid
      have_last = true;
    }
    for (int f = r.begin; f <= r.end; ++f) {
      const auto it = known.find(f);
      if (it != known.end()) {
        last = it->second;
        have_last = true;
      }
      if (!have_last)
        throw ConsistencyError("import_forest: track " + std::to_string(r.label) +
                               " has no pixels in any frame");
      t.rows.push_back({last.first, last.second, f, CellClass::Normal});
    }
    forest.trajectories.emplace(t.id, std::move(t));
  }
  return forest;
}

inline std::vector<LabelMap> read_mask_sequence(const std::filesystem::path& dir,
                                                const char* prefix) {
  const int frames = count_frames(dir, prefix, ".tif");
  std::vector<LabelMap> out;
  out.reserve(frames);
  for (int f = 0; f < frames; ++f) out.push_back(read_label_tiff(dir / frame_name(prefix, f, ".tif")));
  return out;
}

// ------------------------------------------------------------- text dumps --
// detections.txt: one detection per line, "frame x y class area", class in
// {M, N}. tracked_points.txt: one trajectory row per line, "L frame x y
// class". Both use '.' decimals and single spaces.

inline void write_detections(const std::vector<std::vector<DetectedCell>>& per_frame,
                             const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& frame : per_frame)
    for (const DetectedCell& d : frame)
      out << d.frame << ' ' << d.x << ' ' << d.y << ' '
          << (d.cls == CellClass::Mitotic ? 'M' : 'N') << ' ' << d.area << '\n';
  const std::string s = out.str();
  io_detail::write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

inline std::vector<std::vector<DetectedCell>> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::vector<DetectedCell>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    DetectedCell d;
    char cls;
    std::string extra;
    if (!(ls >> d.frame >> d.x >> d.y >> cls >> d.area) || (ls >> extra) ||
        (cls != 'M' && cls != 'N') || d.frame < 0)
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        ": expected \"frame x y class area\"");
    d.cls = cls == 'M' ? CellClass::Mitotic : CellClass::Normal;
    if (d.frame >= static_cast<int>(out.size())) out.resize(d.frame + 1);
    out[d.frame].push_back(d);
  }
  return out;
}

inline void write_tracked_points(const LineageForest& forest, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& [id, t] : forest.trajectories)
    for (const StatusRow& r : t.rows)
      out << id << ' ' << r.frame << ' ' << r.x << ' ' << r.y << ' '
          << (r.status == CellClass::Mitotic ? 'M' : 'N') << '\n';
  const std::string s = out.str();
  io_detail::write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

struct TrackedPoint {
  std::uint32_t id = 0;
  double x = 0.0, y = 0.0;
  CellClass cls = CellClass::Normal;
};

inline std::map<int, std::vector<TrackedPoint>> read_tracked_points(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::map<int, std::vector<TrackedPoint>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long id;
    int frame;
    double x, y;
    char cls;
    std::string extra;
    if (!(ls >> id >> frame >> x >> y >> cls) || (ls >> extra) || id < 1 ||
        (cls != 'M' && cls != 'N'))
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        ": expected \"L frame x y class\"");
    out[frame].push_back({static_cast<std::uint32_t>(id), x, y,
                          cls == 'M' ? CellClass::Mitotic : CellClass::Normal});
  }
  return out;
}

}  // namespace celltrack
