#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flowrbm/dataset.hpp"
#include "flowrbm/model.hpp"
#include "flowrbm/train.hpp"

namespace flowrbm::io {

struct IdxOptions {
  /// A pixel becomes 1 when its [0,1]-scaled intensity is strictly above this.
  double threshold = 0.5;
  /// Average-pool factor applied before thresholding (2 turns 28x28 into 14x14).
  int pool = 1;
};

struct IdxImages {
  BinaryDataset data;
  std::vector<std::uint8_t> labels;  ///< empty when no label file was given
  int height = 0;
  int width = 0;
};

/// Reads an IDX image file (magic 0x00000803) and optional label file
/// (0x00000801). Dimensions are big-endian. Images are flattened row-major.
IdxImages load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {},
                   const IdxOptions& options = {});
/// Parses IDX bytes already in memory.
IdxImages parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>* labels,
                    const IdxOptions& options, const std::string& source = "memory");

/// Dense text dataset: a "N D" header line, then N lines of D {0,1} digits
/// (optionally whitespace separated).
BinaryDataset load_dense(const std::filesystem::path& path);
BinaryDataset parse_dense(std::istream& in, const std::string& source = "stream");
void save_dense(const std::filesystem::path& path, const BinaryDataset& data);

/// Loads IDX when the file starts with an IDX image magic, dense text otherwise.
BinaryDataset load_dataset(const std::filesystem::path& path, const IdxOptions& options = {});

struct Bars {
  int side = 4;
};
struct Parity {
  int dim = 6;
};
struct TeacherRbm {
  RbmParams params;
};

struct SyntheticSpec {
  std::variant<Bars, Parity, TeacherRbm> generator = Bars{};
  int n_samples = 100;
  std::uint64_t seed = 0;
};

/// Desk-scale datasets: single bars on a side x side grid, even-parity vectors,
/// or exact samples from a small teacher RBM (D <= 12).
BinaryDataset generate_synthetic(const SyntheticSpec& spec);

struct Provenance {
  std::string method = "none";
  int k = 0;
  std::uint64_t seed = 0;
  int epochs = 0;

  bool operator==(const Provenance&) const = default;
};

inline constexpr int kModelSchemaVersion = 1;

struct ModelFile {
  RbmParams params;
  Provenance provenance;
};

/// Text header followed by a little-endian payload of 8-byte doubles:
/// W row-major, then b, then c. Temperature is stored as a hex float.
void save_model(const std::filesystem::path& path, const RbmParams& params, const Provenance& provenance = {});
ModelFile load_model_file(const std::filesystem::path& path);
RbmParams load_model(const std::filesystem::path& path);
std::string serialize_model(const RbmParams& params, const Provenance& provenance);
ModelFile deserialize_model(const std::string& bytes);

struct SampleOptions {
  int n = 25;
  int gibbs_steps = 100;
  int grid_side = 5;
  std::uint64_t seed = 0;
  /// Image size; 0 means sqrt(D) for square inputs.
  int width = 0;
  int height = 0;
  /// Start chains at random rows of this dataset instead of uniform noise.
  const BinaryDataset* init_data = nullptr;
};

/// Runs `n` Gibbs chains and tiles the final visible states into one P5 PGM
/// (0 -> black, 1 -> white, gray 1-pixel separators).
void export_samples_pgm(const std::filesystem::path& path, const RbmParams& params, const SampleOptions& options);
std::string render_samples_pgm(const Eigen::Ref<const Eigen::MatrixXd>& samples, int width, int height,
                               int grid_side);

/// epoch,objective,loglik,overflows,seconds
void write_trace_csv(std::ostream& out, const TrainTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace flowrbm::io
