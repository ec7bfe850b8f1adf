#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <variant>
#include <vector>

#include "exion/qtensor.hpp"

// Output-sparse MMUL compaction.
//
// The output matrix is processed in stripes of `lanes` rows (one DPU lane per
// row). Within a stripe each column becomes a lane bitmask; all-zero columns
// are dropped (condensing), the rest are coarsely sorted by density, cut into
// blocks of `p` columns and overlaid onto one physical tile up to three deep
// (merging). Elements that collide are moved to an empty lane of the same
// physical column, which then reads its input row through the conflict vector.
namespace exion::cm {

using LaneMask = uint64_t;
inline constexpr int kMaxLanes = 64;
inline constexpr int kMaxOrigins = 3;
inline constexpr int32_t kNone = -1;

struct ColumnRecord {
  uint32_t orig_col = 0;
  LaneMask mask = 0;
  int nnz = 0;

  static ColumnRecord make(uint32_t col, LaneMask mask);
};

using Block = std::vector<ColumnRecord>;

// Classes are indexed from 0 (high_sparse) to num_classes - 1 (high_dense).
struct SortBuffer {
  SortBuffer(int num_classes, std::size_t class_capacity);

  std::vector<std::deque<ColumnRecord>> classes;
  std::deque<ColumnRecord> extra;
  std::size_t class_capacity;

  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
};

struct SortPlacement {
  int requested_class = 0;
  int cls = 0;         // class that received the record; -1 for extra
  bool extra = false;
};

struct CondenseResult {
  std::vector<std::size_t> surviving;
  std::size_t cols_total = 0;
  std::size_t cols_after = 0;
  double remaining_ratio = 0.0;
};

// Full-height condensing: columns with at least one set bit survive.
CondenseResult condense(const Bitmask& mask);

// floor((nnz - 1) * num_classes / lanes); higher index = denser.
int classify_sparsity(const ColumnRecord& rec, int lanes, int num_classes);

// Lands in the record's class; if full, the next sparser class; if that is
// full too (or there is none), the extra queue.
SortPlacement sortbuffer_insert(SortBuffer& buf, const ColumnRecord& rec, int lanes);

// Drains densest class first (extra last) into blocks of at most p columns.
std::vector<Block> form_blocks(SortBuffer& buf, std::size_t p);

enum class InputLine : uint8_t { Original, Conflict };

// One output element mapped onto a DPU: the lane (row of the array), the
// physical column, the input line selected by i_sw and the weight line
// selected by w_sw.
struct Placement {
  uint16_t lane = 0;
  uint16_t phys_col = 0;
  InputLine i_sw = InputLine::Original;
  uint8_t w_sw = 0;

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct MergedTile {
  std::size_t stripe_base = 0;
  int lanes = 0;
  int blocks_merged = 0;
  std::vector<std::array<int32_t, kMaxOrigins>> origins;  // per physical column, by w_sw
  std::vector<int32_t> cv;                               // per lane, conflict-source row or kNone
  std::vector<LaneMask> occupancy;                       // per physical column
  std::vector<Placement> placements;
  std::size_t conflicts_resolved = 0;

  std::size_t width() const noexcept { return origins.size(); }
  std::size_t logical_row(const Placement& p) const;
  std::size_t logical_col(const Placement& p) const;
  std::size_t origin_count(std::size_t phys_col) const;
  std::size_t cv_lanes_used() const;
};

// Tile holding a single block at w_sw = 0.
MergedTile tile_from_block(const Block& block, std::size_t stripe_base, int lanes);

struct MergeFailure {
  enum class Reason { NoFreeLane, CvIncompatible };
  Reason reason = Reason::NoFreeLane;
  std::size_t phys_col = 0;
  std::size_t lane = 0;        // lane of the unresolved conflict
  std::size_t source_row = 0;  // input row the element needs

  std::string describe() const;
};

// Overlays `cand` positionally onto `base` as the next weight line. Conflicts
// are resolved one at a time: the conflicted column with the smallest degree
// of freedom first, its lowest conflicted lane moved to the lowest empty lane
// whose conflict-vector slot is free or already holds the needed row. On
// failure base is untouched and the blocking conflict is reported.
std::variant<MergedTile, MergeFailure> try_merge(const MergedTile& base, const Block& cand, int lanes);

struct ConMergeConfig {
  int num_classes = 4;
  std::size_t class_capacity = 0;  // 0 = ceil(columns / num_classes)
  bool sorted = true;
};

struct CompactionStats {
  std::size_t rows = 0;
  std::size_t cols_total = 0;
  std::size_t cols_after_condense = 0;  // full-height condensing
  std::size_t stripes = 0;
  std::size_t stripe_cols_total = 0;           // stripes * cols
  std::size_t stripe_cols_after_condense = 0;  // columns non-empty within their stripe
  std::size_t physical_cols_after_merge = 0;   // summed over stripes
  std::size_t tiles = 0;
  std::size_t merge_attempts = 0;
  std::size_t merge_successes = 0;
  std::size_t conflict_resolutions = 0;
  std::size_t required_elements = 0;
  double remaining_ratio_condense = 0.0;         // cols_after_condense / cols_total
  double remaining_ratio_stripe_condense = 0.0;  // stripe_cols_after_condense / stripe_cols_total
  double remaining_ratio_merge = 0.0;            // physical_cols_after_merge / stripe_cols_total

  CompactionStats& operator+=(const CompactionStats& o);
  void finalize_ratios();
};

struct ConMergeResult {
  std::vector<MergedTile> tiles;
  CompactionStats stats;
};

ConMergeResult conmerge(const Bitmask& mask, int lanes, std::size_t p, const ConMergeConfig& cfg = {});

// Runs every placement as one exact dot product. Throws ConsistencyError if the
// produced positions differ from mask.
MaskedProduct execute_merged(const QTensor& input, const QTensor& weights, const std::vector<MergedTile>& tiles,
                             const Bitmask& mask);

// try_merge invocations with sorted or original-order block formation.
std::size_t merge_effort(const Bitmask& mask, int lanes, std::size_t p, ConMergeConfig cfg, bool sorted);

}  // namespace exion::cm
