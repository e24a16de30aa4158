#include "flowrbm/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "flowrbm/error.hpp"

namespace flowrbm::io {
namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr const char* kModelMagic = "flowrbm-model";

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const char* what) {
  if (offset + 4 > bytes.size()) throw ParseError(std::string("truncated IDX header: missing ") + what, bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hex_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

void append_le(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

double read_le(const std::string& bytes, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= std::uint64_t{static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)])} << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

IdxImages parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>* labels,
                    const IdxOptions& options, const std::string& source) {
  if (options.threshold < 0.0 || options.threshold >= 1.0) throw ConfigError("IDX threshold must be in [0, 1)");
  if (options.pool < 1) throw ConfigError("IDX pool factor must be >= 1");
  const std::uint32_t magic = read_be32(images, 0, "magic");
  if (magic != kIdxImageMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX image magic 0x%08x (expected 0x%08x)", magic, kIdxImageMagic);
    throw ParseError(buf, 0);
  }
  const std::uint32_t count = read_be32(images, 4, "image count");
  const std::uint32_t rows = read_be32(images, 8, "row count");
  const std::uint32_t cols = read_be32(images, 12, "column count");
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t expected = 16 + std::size_t{count} * pixels;
  if (images.size() < expected) {
    throw ParseError("truncated IDX image payload: expected " + std::to_string(expected) + " bytes, got " +
                         std::to_string(images.size()),
                     images.size());
  }
  if (count == 0 || pixels == 0) throw ParseError("IDX image file holds no pixels", 4);
  if (rows % static_cast<std::uint32_t>(options.pool) != 0 || cols % static_cast<std::uint32_t>(options.pool) != 0) {
    throw ConfigError("image size is not divisible by the pool factor");
  }

  IdxImages out;
  out.height = static_cast<int>(rows) / options.pool;
  out.width = static_cast<int>(cols) / options.pool;
  out.data.source = source;
  out.data.binarize_threshold = options.threshold;
  out.data.rows.resize(count, static_cast<Eigen::Index>(out.height) * out.width);
  const double cell = static_cast<double>(options.pool * options.pool);
  for (std::size_t n = 0; n < count; ++n) {
    const std::uint8_t* img = images.data() + 16 + n * pixels;
    for (int r = 0; r < out.height; ++r) {
      for (int c = 0; c < out.width; ++c) {
        double sum = 0.0;
        for (int dr = 0; dr < options.pool; ++dr) {
          for (int dc = 0; dc < options.pool; ++dc) {
            sum += img[static_cast<std::size_t>(r * options.pool + dr) * cols +
                       static_cast<std::size_t>(c * options.pool + dc)];
          }
        }
        const double intensity = sum / (255.0 * cell);
        out.data.rows(static_cast<Eigen::Index>(n), r * out.width + c) = intensity > options.threshold ? 1.0 : 0.0;
      }
    }
  }

  if (labels) {
    const std::uint32_t label_magic = read_be32(*labels, 0, "label magic");
    if (label_magic != kIdxLabelMagic) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "bad IDX label magic 0x%08x (expected 0x%08x)", label_magic, kIdxLabelMagic);
      throw ParseError(buf, 0);
    }
    const std::uint32_t label_count = read_be32(*labels, 4, "label count");
    if (label_count != count) {
      throw ParseError("label count " + std::to_string(label_count) + " does not match image count " +
                           std::to_string(count),
                       4);
    }
    if (labels->size() < 8 + std::size_t{label_count}) {
      throw ParseError("truncated IDX label payload", labels->size());
    }
    out.labels.assign(labels->begin() + 8, labels->begin() + 8 + label_count);
  }
  return out;
}

IdxImages load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                   const IdxOptions& options) {
  const std::vector<std::uint8_t> image_bytes = read_bytes(images);
  if (labels) {
    const std::vector<std::uint8_t> label_bytes = read_bytes(*labels);
    return parse_idx(image_bytes, &label_bytes, options, images.string());
  }
  return parse_idx(image_bytes, nullptr, options, images.string());
}

BinaryDataset parse_dense(std::istream& in, const std::string& source) {
  long n = 0;
  long d = 0;
  if (!(in >> n >> d) || n < 1 || d < 1) throw ParseError("dense dataset needs an 'N D' header", 0);
  BinaryDataset data{Eigen::MatrixXd(n, d), source, 0.5};
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < d; ++c) {
      char ch = 0;
      if (!(in >> ch)) {
        in.clear();
        in.seekg(0, std::ios::end);
        const auto end = in.tellg();
        throw ParseError("dense dataset ended early at row " + std::to_string(r),
                         end < 0 ? 0 : static_cast<std::size_t>(end));
      }
      if (ch != '0' && ch != '1') {
        const auto pos = in.tellg();
        throw ParseError(std::string("dense dataset entry '") + ch + "' is not 0 or 1",
                         pos < 0 ? 0 : static_cast<std::size_t>(pos) - 1);
      }
      data.rows(r, c) = ch == '1' ? 1.0 : 0.0;
    }
  }
  return data;
}

BinaryDataset load_dense(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_dense(in, path.string());
}

void save_dense(const std::filesystem::path& path, const BinaryDataset& data) {
  data.validate();
  std::string text = std::to_string(data.size()) + " " + std::to_string(data.dim()) + "\n";
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.dim(); ++c) text.push_back(data.rows(r, c) != 0.0 ? '1' : '0');
    text.push_back('\n');
  }
  write_file(path, text);
}

BinaryDataset load_dataset(const std::filesystem::path& path, const IdxOptions& options) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  if (bytes.size() >= 4 && bytes[0] == 0 && bytes[1] == 0 && bytes[2] == 0x08 && bytes[3] == 0x03) {
    return parse_idx(bytes, nullptr, options, path.string()).data;
  }
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  return parse_dense(in, path.string());
}

BinaryDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_samples < 1) throw ConfigError("synthetic dataset needs n_samples >= 1");
  Rng rng(spec.seed);
  BinaryDataset data;
  data.binarize_threshold = 0.5;
  if (const auto* bars = std::get_if<Bars>(&spec.generator)) {
    if (bars->side < 1) throw ConfigError("bars needs side >= 1");
    const int side = bars->side;
    data.source = "bars(" + std::to_string(side) + ")";
    data.rows = Eigen::MatrixXd::Zero(spec.n_samples, side * side);
    for (int n = 0; n < spec.n_samples; ++n) {
      const bool horizontal = rng.bernoulli(0.5);
      const int line = static_cast<int>(rng.index(static_cast<std::uint64_t>(side)));
      for (int t = 0; t < side; ++t) data.rows(n, horizontal ? line * side + t : t * side + line) = 1.0;
    }
  } else if (const auto* parity = std::get_if<Parity>(&spec.generator)) {
    if (parity->dim < 1) throw ConfigError("parity needs dim >= 1");
    data.source = "parity(" + std::to_string(parity->dim) + ")";
    data.rows = Eigen::MatrixXd::Zero(spec.n_samples, parity->dim);
    for (int n = 0; n < spec.n_samples; ++n) {
      int ones = 0;
      for (int i = 0; i + 1 < parity->dim; ++i) {
        const bool bit = rng.bernoulli(0.5);
        data.rows(n, i) = bit ? 1.0 : 0.0;
        ones += bit;
      }
      data.rows(n, parity->dim - 1) = (ones % 2 == 1) ? 1.0 : 0.0;
    }
  } else {
    const auto& teacher = std::get<TeacherRbm>(spec.generator);
    teacher.params.validate();
    if (teacher.params.visible() > 12) throw CapacityError("teacher_rbm sampling needs D <= 12");
    const int d = teacher.params.visible();
    data.source = "teacher_rbm(D=" + std::to_string(d) + ",H=" + std::to_string(teacher.params.hidden()) + ")";
    const Eigen::VectorXd probs = exact_visible_log_probs(teacher.params).array().exp();
    std::vector<double> cdf(static_cast<std::size_t>(probs.size()));
    double acc = 0.0;
    for (Eigen::Index s = 0; s < probs.size(); ++s) cdf[static_cast<std::size_t>(s)] = acc += probs[s];
    data.rows.resize(spec.n_samples, d);
    for (int n = 0; n < spec.n_samples; ++n) {
      const double u = rng.uniform() * acc;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto state = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), probs.size() - 1));
      data.rows.row(n) = state_bits(state, d).transpose();
    }
  }
  return data;
}

std::string serialize_model(const RbmParams& params, const Provenance& provenance) {
  params.validate();
  const int d = params.visible();
  const int h = params.hidden();
  const std::size_t payload = 8 * (std::size_t(d) * h + d + h);
  std::ostringstream header;
  header << kModelMagic << ' ' << kModelSchemaVersion << '\n'
         << "endianness little\n"
         << "visible " << d << '\n'
         << "hidden " << h << '\n'
         << "tau " << hex_double(params.tau) << '\n'
         << "method " << provenance.method << '\n'
         << "k " << provenance.k << '\n'
         << "seed " << provenance.seed << '\n'
         << "epochs " << provenance.epochs << '\n'
         << "payload_bytes " << payload << '\n'
         << "end\n";
  std::string out = header.str();
  out.reserve(out.size() + payload);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < h; ++j) append_le(out, params.W(i, j));
  }
  for (int i = 0; i < d; ++i) append_le(out, params.b[i]);
  for (int j = 0; j < h; ++j) append_le(out, params.c[j]);
  return out;
}

ModelFile deserialize_model(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&](const char* key) {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw ParseError(std::string("model header truncated before '") + key + "'", pos);
    std::string line = bytes.substr(pos, end - pos);
    const std::size_t start = pos;
    pos = end + 1;
    const std::string prefix = std::string(key) + ' ';
    if (line.rfind(prefix, 0) != 0 && line != key) {
      throw ParseError(std::string("model header expected '") + key + "', found '" + line + "'", start);
    }
    return std::make_pair(line.size() > prefix.size() ? line.substr(prefix.size()) : std::string(), start);
  };
  auto to_long = [](const std::pair<std::string, std::size_t>& field, const char* key) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(field.first, &used);
      if (used != field.first.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw ParseError(std::string("model header field '") + key + "' is not an integer", field.second);
    }
  };

  const auto version = next_line(kModelMagic);
  if (to_long(version, "version") != kModelSchemaVersion) {
    throw ParseError("unsupported model schema version " + version.first, version.second);
  }
  const auto endian = next_line("endianness");
  if (endian.first != "little") throw ParseError("unsupported payload endianness " + endian.first, endian.second);
  const long long d = to_long(next_line("visible"), "visible");
  const long long h = to_long(next_line("hidden"), "hidden");
  const auto tau_field = next_line("tau");
  ModelFile model;
  model.provenance.method = next_line("method").first;
  model.provenance.k = static_cast<int>(to_long(next_line("k"), "k"));
  const auto seed_field = next_line("seed");
  try {
    model.provenance.seed = std::stoull(seed_field.first);
  } catch (const std::exception&) {
    throw ParseError("model header field 'seed' is not an integer", seed_field.second);
  }
  model.provenance.epochs = static_cast<int>(to_long(next_line("epochs"), "epochs"));
  const auto payload_field = next_line("payload_bytes");
  const long long payload = to_long(payload_field, "payload_bytes");
  next_line("end");

  if (d < 1 || h < 1 || d > (1 << 20) || h > (1 << 20)) throw ParseError("model dimensions out of range", 0);
  const long long expected = 8 * (d * h + d + h);
  if (payload != expected) {
    throw ParseError("payload_bytes " + std::to_string(payload) + " inconsistent with D=" + std::to_string(d) +
                         ", H=" + std::to_string(h) + " (expected " + std::to_string(expected) + ")",
                     payload_field.second);
  }
  if (bytes.size() - pos != static_cast<std::size_t>(payload)) {
    throw ParseError("model payload has " + std::to_string(bytes.size() - pos) + " bytes, header declares " +
                         std::to_string(payload),
                     bytes.size());
  }
  char* end = nullptr;
  const double tau = std::strtod(tau_field.first.c_str(), &end);
  if (end == tau_field.first.c_str() || *end != '\0') throw ParseError("model temperature is not a number", tau_field.second);

  RbmParams params(static_cast<int>(d), static_cast<int>(h), tau);
  for (long long i = 0; i < d; ++i) {
    for (long long j = 0; j < h; ++j) {
      params.W(i, j) = read_le(bytes, pos);
      pos += 8;
    }
  }
  for (long long i = 0; i < d; ++i, pos += 8) params.b[i] = read_le(bytes, pos);
  for (long long j = 0; j < h; ++j, pos += 8) params.c[j] = read_le(bytes, pos);
  try {
    params.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("model payload invalid: ") + e.what(), 0);
  }
  model.params = std::move(params);
  return model;
}

void save_model(const std::filesystem::path& path, const RbmParams& params, const Provenance& provenance) {
  write_file(path, serialize_model(params, provenance));
}

ModelFile load_model_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> raw = read_bytes(path);
  return deserialize_model(std::string(raw.begin(), raw.end()));
}

RbmParams load_model(const std::filesystem::path& path) { return load_model_file(path).params; }

std::string render_samples_pgm(const Eigen::Ref<const Eigen::MatrixXd>& samples, int width, int height,
                               int grid_side) {
  if (width < 1 || height < 1 || static_cast<Eigen::Index>(width) * height != samples.cols()) {
    throw ConfigError("image layout " + std::to_string(width) + "x" + std::to_string(height) +
                      " does not match D=" + std::to_string(samples.cols()));
  }
  if (grid_side < 1) throw ConfigError("grid side must be >= 1");
  const auto n = static_cast<int>(samples.rows());
  if (n < 1) throw ConfigError("no samples to render");
  const int grid_rows = (n + grid_side - 1) / grid_side;
  const int cols = std::min(n, grid_side);
  const int img_w = cols * width + (cols - 1);
  const int img_h = grid_rows * height + (grid_rows - 1);
  std::string pixels(static_cast<std::size_t>(img_w) * img_h, static_cast<char>(128));
  for (int s = 0; s < n; ++s) {
    const int gy = s / grid_side;
    const int gx = s % grid_side;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t at = static_cast<std::size_t>(gy * (height + 1) + y) * img_w + gx * (width + 1) + x;
        pixels[at] = samples(s, y * width + x) != 0.0 ? static_cast<char>(255) : static_cast<char>(0);
      }
    }
  }
  return "P5\n" + std::to_string(img_w) + " " + std::to_string(img_h) + "\n255\n" + pixels;
}

void export_samples_pgm(const std::filesystem::path& path, const RbmParams& params, const SampleOptions& options) {
  params.validate();
  if (options.n < 1) throw ConfigError("need at least one sample");
  if (options.gibbs_steps < 0) throw ConfigError("gibbs steps must be >= 0");
  if (options.grid_side < 1) throw ConfigError("grid side must be >= 1");
  int width = options.width;
  int height = options.height;
  if (width == 0 && height == 0) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(params.visible()))));
    if (side * side != params.visible()) {
      throw ConfigError("D=" + std::to_string(params.visible()) + " is not a perfect square; give width and height");
    }
    width = height = side;
  }
  if (static_cast<long>(width) * height != params.visible()) throw ConfigError("width x height must equal D");
  if (options.init_data && options.init_data->dim() != params.visible()) {
    throw ConfigError("initialisation data dimension does not match D");
  }

  Rng rng(options.seed);
  Eigen::MatrixXd samples(options.n, params.visible());
  for (int s = 0; s < options.n; ++s) {
    VisibleState v(params.visible());
    if (options.init_data) {
      v = options.init_data->rows.row(static_cast<Eigen::Index>(rng.index(options.init_data->size()))).transpose();
    } else {
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    samples.row(s) = gibbs_chain(params, std::move(v), options.gibbs_steps, rng).transpose();
  }
  write_file(path, render_samples_pgm(samples, width, height, options.grid_side));
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
  out << "epoch,objective,loglik,overflows,seconds\n";
  for (const EpochRecord& r : trace.epochs) {
    out << r.epoch << ',' << format_double(r.objective) << ',' << (r.loglik ? format_double(*r.loglik) : "") << ','
        << r.overflows << ',' << format_double(r.seconds) << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
  std::ostringstream text;
  write_trace_csv(text, trace);
  write_file(path, text.str());
}

}  // namespace flowrbm::io
