#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hicentro/genome.hpp"

namespace hicentro {

// Shortest decimal text that parses back to exactly v.
[[nodiscard]] std::string format_double(double v);

// Sidecar metadata written next to the per-block TSV files.
struct MapMetadata {
  std::uint64_t genome_hash{};
  bp_t resolution{};
  std::optional<CentromereVector> theta_ref;
  std::optional<std::uint64_t> seed;
  bool normalized{false};
};

// Writes dir/map.json plus one tab-separated dense matrix per upper block
// (dir/block_<i>_<j>.tsv). Values use shortest round-trip formatting, so
// save -> load is bit-identical.
void save_map(const ContactMap& map, const std::filesystem::path& dir, const MapMetadata& meta = {});

// Reads a map directory against `genome`. Shape mismatches, non-numeric and
// negative cells raise LoadError naming the block and cell.
[[nodiscard]] ContactMap load_map(const std::filesystem::path& dir, const GenomeSpec& genome);
[[nodiscard]] MapMetadata load_map_metadata(const std::filesystem::path& dir);

// Dense matrix <-> TSV (no header, row-major).
void write_tsv(const std::filesystem::path& path, const Eigen::Ref<const Block>& m);
[[nodiscard]] Block read_tsv(const std::filesystem::path& path);

struct IceOptions {
  std::size_t max_iters{200};
  double tol{1e-6};
};

struct IceResult {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd bias;  // matrix = diag(bias) * input * diag(bias)
  std::size_t iterations{};
  bool converged{false};
  std::vector<std::size_t> zero_rows;
};

// Iterative correction of a square symmetric non-negative matrix: rescales
// rows and columns together until every nonzero row sums to 1 within tol.
[[nodiscard]] IceResult ice_normalize(const Eigen::MatrixXd& m, const IceOptions& options = {});

// ICE applied to the symmetrized trans-only matrix of a map.
[[nodiscard]] ContactMap ice_normalize(const ContactMap& map, const IceOptions& options = {});

enum class ReferenceMode { raw, normalized };

[[nodiscard]] ReferenceMode parse_reference_mode(const std::string& s);

struct Reference {
  ContactMap map;
  MapMetadata meta;
};

// Seeded simulated reference map at theta_ref (full noise model).
[[nodiscard]] Reference make_reference(const GenomeSpec& spec, const CentromereVector& theta_ref,
                                       std::uint64_t seed, ReferenceMode mode);

}  // namespace hicentro
