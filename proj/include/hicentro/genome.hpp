#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hicentro/random.hpp"

namespace hicentro {

using bp_t = std::int64_t;

// Dense row-major block of contact counts.
using Block = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One centromere position per chromosome, in bp (continuous).
using CentromereVector = std::vector<double>;

struct Chromosome {
  std::string name;
  bp_t length_bp{};
};

// Chromosome lengths plus map resolution. Defines all bin geometry.
class GenomeSpec {
 public:
  GenomeSpec() = default;
  GenomeSpec(std::vector<Chromosome> chromosomes, bp_t resolution_bp);

  [[nodiscard]] std::size_t size() const noexcept { return chromosomes_.size(); }
  [[nodiscard]] bp_t resolution() const noexcept { return resolution_; }
  [[nodiscard]] const Chromosome& chromosome(std::size_t i) const;
  [[nodiscard]] bp_t length(std::size_t i) const { return chromosome(i).length_bp; }
  [[nodiscard]] const std::string& name(std::size_t i) const { return chromosome(i).name; }

  // ceil(length / resolution); trailing partial windows get their own bin.
  [[nodiscard]] std::size_t bins(std::size_t i) const;
  [[nodiscard]] std::size_t total_bins() const noexcept { return total_bins_; }
  [[nodiscard]] std::size_t max_bins() const noexcept { return max_bins_; }
  // First row of chromosome i in the assembled whole-genome matrix.
  [[nodiscard]] std::size_t offset(std::size_t i) const;

  [[nodiscard]] std::size_t pair_count() const noexcept { return size() * (size() - 1) / 2; }
  // Position of the upper block (i, j), i < j, in row-major pair order.
  [[nodiscard]] std::size_t pair_index(std::size_t i, std::size_t j) const;
  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> pairs() const;

  [[nodiscard]] GenomeSpec subset(std::span<const std::size_t> indices) const;

  // Prior support is [1, l_i - 1] per chromosome.
  [[nodiscard]] std::vector<double> prior_lower() const;
  [[nodiscard]] std::vector<double> prior_upper() const;

  // FNV-1a over the canonical JSON form; stamped into map sidecars.
  [[nodiscard]] std::uint64_t hash() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static GenomeSpec from_json(const nlohmann::json& j);
  static GenomeSpec load(const std::filesystem::path& path);

  friend bool operator==(const GenomeSpec& a, const GenomeSpec& b);

 private:
  std::vector<Chromosome> chromosomes_;
  std::vector<std::size_t> bins_;
  std::vector<std::size_t> offsets_;
  bp_t resolution_{0};
  std::size_t total_bins_{0};
  std::size_t max_bins_{0};
};

inline bool operator==(const Chromosome& a, const Chromosome& b) {
  return a.name == b.name && a.length_bp == b.length_bp;
}

// floor(pos / r), clamped so pos == length maps to the last bin.
[[nodiscard]] std::size_t bp_to_bin(double pos_bp, const GenomeSpec& spec, std::size_t chrom);
// Bin centre (k + 0.5) * r.
[[nodiscard]] double bin_to_bp(std::size_t bin, const GenomeSpec& spec);

[[nodiscard]] std::pair<std::size_t, std::size_t> block_shape(const GenomeSpec& spec, std::size_t i,
                                                              std::size_t j);

[[nodiscard]] CentromereVector sample_prior(const GenomeSpec& spec, Rng& rng);
[[nodiscard]] bool in_prior_support(const GenomeSpec& spec, std::span<const double> theta);
// log of the uniform prior density on prod [1, l_i - 1]; -inf outside.
[[nodiscard]] double prior_logpdf(const GenomeSpec& spec, std::span<const double> theta);

// Axis-aligned uniform prior, the form every inference engine consumes.
struct BoxPrior {
  std::vector<double> lower;
  std::vector<double> upper;

  static BoxPrior from_genome(const GenomeSpec& spec);
  static BoxPrior from_chromosome(const GenomeSpec& spec, std::size_t chrom);

  [[nodiscard]] std::size_t dim() const noexcept { return lower.size(); }
  [[nodiscard]] std::vector<double> sample(Rng& rng) const;
  [[nodiscard]] bool contains(std::span<const double> theta) const;
  [[nodiscard]] double log_pdf(std::span<const double> theta) const;
};

// Upper trans-contact blocks C_ij (i < j), each of shape (bins(i), bins(j)).
class ContactMap {
 public:
  ContactMap() = default;
  explicit ContactMap(GenomeSpec genome);  // zero-filled blocks

  [[nodiscard]] const GenomeSpec& genome() const noexcept { return genome_; }
  [[nodiscard]] std::size_t block_count() const noexcept { return blocks_.size(); }
  [[nodiscard]] Block& block(std::size_t i, std::size_t j);
  [[nodiscard]] const Block& block(std::size_t i, std::size_t j) const;
  [[nodiscard]] std::span<Block> blocks() noexcept { return blocks_; }
  [[nodiscard]] std::span<const Block> blocks() const noexcept { return blocks_; }

  // Block pairing i with j, oriented so chromosome i indexes rows.
  [[nodiscard]] Block oriented_block(std::size_t i, std::size_t j) const;

  // Symmetric whole-genome matrix with zero cis blocks.
  [[nodiscard]] Eigen::MatrixXd assemble() const;
  static ContactMap from_assembled(const GenomeSpec& genome, const Eigen::MatrixXd& full);

  // Throws DomainError unless geometry is consistent and all entries are >= 0.
  void validate() const;

 private:
  GenomeSpec genome_;
  std::vector<Block> blocks_;
};

// The i-th line of trans blocks: every partner j != i, chromosome i on rows.
struct BlockRow {
  std::size_t chromosome{};
  std::vector<std::size_t> partners;
  std::vector<Block> blocks;
};

[[nodiscard]] BlockRow extract_block_row(const ContactMap& map, std::size_t chrom);

// Shipped example genome: S. cerevisiae at 32 kb.
[[nodiscard]] GenomeSpec yeast_genome();
[[nodiscard]] GenomeSpec yeast_small_genome();

}  // namespace hicentro
