#include "deft/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deft/error.hpp"

namespace deft {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'F', 'T', 'E', 'M', 'B', '1'};
constexpr std::uint32_t kFlagTrueLabels = 1u << 0;
constexpr std::uint32_t kFlagNormalized = 1u << 1;
constexpr std::size_t kHeaderBytes = 32;  // magic + 4 u32 fields + 8 reserved

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32_le(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    require(4, "u32 field");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  void skip(std::size_t n, const char* what) {
    require(n, what);
    pos_ += n;
  }

  void require(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(path_ + ": truncated file, expected " + std::to_string(n) + " more bytes for " +
                       what + " at byte " + std::to_string(pos_) + " (file has " +
                       std::to_string(bytes_.size()) + " bytes)");
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* raw(std::size_t at) const { return bytes_.data() + at; }

 private:
  const std::string& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path + " for reading");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (!in.good() && !in.eof()) {
    throw IoError("failed reading " + path);
  }
  return std::move(buffer).str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out.good()) {
    throw IoError("failed writing " + path);
  }
}

std::string format_float(float v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

LabeledDataset load_binary(const std::string& path) {
  const std::string bytes = read_file(path);
  ByteReader reader(bytes, path);
  reader.require(8, "magic");
  if (std::memcmp(reader.raw(0), kMagic, 8) != 0) {
    throw ParseError(path + ": bad magic at byte 0, expected DEFTEMB1");
  }
  reader.skip(8, "magic");
  LabeledDataset ds;
  ds.n = reader.u32();
  ds.dim = reader.u32();
  ds.num_classes = reader.u32();
  const std::uint32_t flags = reader.u32();
  reader.skip(8, "reserved header bytes");
  ds.normalized = (flags & kFlagNormalized) != 0;

  ds.features.resize(ds.n * ds.dim);
  for (float& v : ds.features) {
    v = reader.f32();
  }
  ds.given_labels.resize(ds.n);
  for (std::uint32_t& v : ds.given_labels) {
    v = reader.u32();
  }
  if (flags & kFlagTrueLabels) {
    std::vector<std::uint32_t> truth(ds.n);
    for (std::uint32_t& v : truth) {
      v = reader.u32();
    }
    ds.true_labels = std::move(truth);
  }
  if (reader.remaining() != 0) {
    throw ParseError(path + ": trailing garbage, expected end of file at byte " +
                     std::to_string(reader.pos()));
  }
  ds.class_names = default_class_names(ds.num_classes);
  ds.validate();
  return ds;
}

void write_binary(const LabeledDataset& ds, const std::string& path) {
  std::string bytes;
  bytes.reserve(kHeaderBytes + 4 * ds.features.size() + 8 * ds.n);
  bytes.append(kMagic, 8);
  put_u32_le(bytes, static_cast<std::uint32_t>(ds.n));
  put_u32_le(bytes, static_cast<std::uint32_t>(ds.dim));
  put_u32_le(bytes, static_cast<std::uint32_t>(ds.num_classes));
  std::uint32_t flags = 0;
  if (ds.has_true_labels()) flags |= kFlagTrueLabels;
  if (ds.normalized) flags |= kFlagNormalized;
  put_u32_le(bytes, flags);
  bytes.append(8, '\0');
  for (const float v : ds.features) {
    put_f32_le(bytes, v);
  }
  for (const std::uint32_t v : ds.given_labels) {
    put_u32_le(bytes, v);
  }
  if (ds.has_true_labels()) {
    for (const std::uint32_t v : *ds.true_labels) {
      put_u32_le(bytes, v);
    }
  }
  write_file(path, bytes);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string expected_csv_header(std::size_t dim) {
  std::string header = "label,true_label";
  for (std::size_t j = 0; j < dim; ++j) {
    header += ",f" + std::to_string(j);
  }
  return header;
}

LabeledDataset load_csv(const std::string& path) {
  const std::string bytes = read_file(path);
  LabeledDataset ds;
  std::size_t line_start = 0;
  std::size_t line_no = 0;
  bool saw_header = false;
  bool any_true = false;
  bool any_empty_true = false;
  std::vector<std::uint32_t> truth;
  while (line_start < bytes.size()) {
    std::size_t line_end = bytes.find('\n', line_start);
    if (line_end == std::string::npos) {
      line_end = bytes.size();
    }
    std::string line = bytes.substr(line_start, line_end - line_start);
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      const auto fields = split_csv_line(line);
      if (!saw_header) {
        if (fields.size() < 3 || fields[0] != "label" || fields[1] != "true_label") {
          throw ParseError(path + ": bad CSV header at byte " + std::to_string(line_start) +
                           ", expected label,true_label,f0,...");
        }
        ds.dim = fields.size() - 2;
        if (line != expected_csv_header(ds.dim)) {
          throw ParseError(path + ": bad CSV header at byte " + std::to_string(line_start));
        }
        saw_header = true;
      } else {
        if (fields.size() != ds.dim + 2) {
          throw ParseError(path + ": row " + std::to_string(line_no) + " at byte " +
                           std::to_string(line_start) + " has " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(ds.dim + 2));
        }
        const auto parse_label = [&](const std::string& field) {
          std::uint32_t value = 0;
          const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
          if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
            throw ParseError(path + ": bad label '" + field + "' at byte " +
                             std::to_string(line_start));
          }
          return value;
        };
        ds.given_labels.push_back(parse_label(fields[0]));
        if (fields[1].empty()) {
          any_empty_true = true;
          truth.push_back(0);
        } else {
          any_true = true;
          truth.push_back(parse_label(fields[1]));
        }
        for (std::size_t j = 0; j < ds.dim; ++j) {
          const std::string& field = fields[j + 2];
          float value = 0.0f;
          const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
          if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
            throw ParseError(path + ": bad float '" + field + "' at byte " +
                             std::to_string(line_start));
          }
          ds.features.push_back(value);
        }
        ++ds.n;
      }
      ++line_no;
    }
    line_start = line_end + 1;
  }
  if (!saw_header) {
    throw ParseError(path + ": empty file, expected CSV header at byte 0");
  }
  if (any_true && any_empty_true) {
    throw ParseError(path + ": true_label column must be fully populated or fully empty");
  }
  if (any_true) {
    ds.true_labels = std::move(truth);
  }
  std::uint32_t max_label = 0;
  for (const std::uint32_t v : ds.given_labels) {
    max_label = std::max(max_label, v);
  }
  if (ds.true_labels) {
    for (const std::uint32_t v : *ds.true_labels) {
      max_label = std::max(max_label, v);
    }
  }
  ds.num_classes = ds.n == 0 ? 0 : max_label + 1;
  ds.class_names = default_class_names(ds.num_classes);
  // The CSV layout has no flag column; recover `normalized` from the data.
  ds.normalized = ds.n > 0;
  for (std::size_t i = 0; i < ds.n && ds.normalized; ++i) {
    const std::span<const float> row = ds.embedding(i);
    ds.normalized = std::abs(detail::norm_f64(row) - 1.0) <= 1e-5;
  }
  ds.validate();
  return ds;
}

void write_csv(const LabeledDataset& ds, const std::string& path) {
  std::string out = expected_csv_header(ds.dim) + "\n";
  for (std::size_t i = 0; i < ds.n; ++i) {
    out += std::to_string(ds.given_labels[i]);
    out += ',';
    if (ds.has_true_labels()) {
      out += std::to_string((*ds.true_labels)[i]);
    }
    for (std::size_t j = 0; j < ds.dim; ++j) {
      out += ',';
      out += format_float(ds.features[i * ds.dim + j]);
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace

double LabeledDataset::noise_fraction() const {
  if (!has_true_labels() || n == 0) {
    return 0.0;
  }
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    flipped += given_labels[i] != (*true_labels)[i] ? 1 : 0;
  }
  return static_cast<double>(flipped) / static_cast<double>(n);
}

void LabeledDataset::validate() const {
  if (n == 0) {
    throw DataValidationError("dataset is empty");
  }
  if (dim < 2) {
    throw DataValidationError("embedding dimension must be at least 2, got " + std::to_string(dim));
  }
  if (num_classes == 0) {
    throw DataValidationError("dataset declares zero classes");
  }
  if (features.size() != n * dim) {
    throw DimensionError("feature buffer has " + std::to_string(features.size()) +
                         " values, expected " + std::to_string(n * dim));
  }
  if (given_labels.size() != n) {
    throw DimensionError("given_labels length mismatch");
  }
  if (true_labels && true_labels->size() != n) {
    throw DimensionError("true_labels length mismatch");
  }
  if (class_names.size() != num_classes) {
    throw DimensionError("class_names length mismatch");
  }
  for (const float v : features) {
    if (!std::isfinite(v)) {
      throw DataValidationError("non-finite embedding value");
    }
  }
  const auto check_labels = [&](const std::vector<std::uint32_t>& labels, const char* what) {
    for (const std::uint32_t v : labels) {
      if (v >= num_classes) {
        throw DataValidationError(std::string(what) + " " + std::to_string(v) +
                                  " out of range for " + std::to_string(num_classes) + " classes");
      }
    }
  };
  check_labels(given_labels, "given label");
  if (true_labels) {
    check_labels(*true_labels, "true label");
  }
  if (normalized) {
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = detail::norm_f64(embedding(i));
      if (std::abs(norm - 1.0) > 1e-5) {
        throw DataValidationError("sample " + std::to_string(i) + " flagged normalized but |x| = " +
                                  std::to_string(norm));
      }
    }
  }
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  names.reserve(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    names.push_back("class_" + std::to_string(k));
  }
  return names;
}

Matrix to_f64_matrix(const LabeledDataset& ds) {
  Matrix m(ds.n, ds.dim);
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    m.data()[i] = static_cast<double>(ds.features[i]);
  }
  return m;
}

FileFormat format_from_path(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
    return FileFormat::csv;
  }
  return FileFormat::binary;
}

LabeledDataset load_embeddings(const std::string& path, FileFormat format) {
  return format == FileFormat::binary ? load_binary(path) : load_csv(path);
}

void write_embeddings(const LabeledDataset& ds, const std::string& path, FileFormat format) {
  ds.validate();
  if (format == FileFormat::binary) {
    write_binary(ds, path);
  } else {
    write_csv(ds, path);
  }
}

Mask load_mask(const std::string& path) {
  const std::string bytes = read_file(path);
  Mask mask;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const char c = bytes[i];
    if (c == '0' || c == '1') {
      mask.push_back(c == '1' ? 1 : 0);
    } else if (c != '\n' && c != '\r') {
      throw ParseError(path + ": unexpected character '" + std::string(1, c) + "' at byte " +
                       std::to_string(i) + ", mask files hold one 0/1 per line");
    }
  }
  return mask;
}

void write_mask(const Mask& mask, const std::string& path) {
  std::string out;
  out.reserve(2 * mask.size());
  for (const std::uint8_t v : mask) {
    out += v ? "1\n" : "0\n";
  }
  write_file(path, out);
}

}  // namespace deft
