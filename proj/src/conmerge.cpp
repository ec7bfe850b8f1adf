#include "exion/conmerge.hpp"

#include <algorithm>
#include <bit>
#include <limits>

#include "exion/error.hpp"
#include "exion/simd/kernels.hpp"

namespace exion::cm {

namespace {

constexpr LaneMask bit(std::size_t lane) { return LaneMask{1} << lane; }

LaneMask all_lanes(int lanes) { return lanes >= 64 ? ~LaneMask{0} : (LaneMask{1} << lanes) - 1; }

void check_lanes(int lanes) {
  if (lanes < 1 || lanes > kMaxLanes) throw ContractError("conmerge: lanes must be in [1, 64]");
}

}  // namespace

ColumnRecord ColumnRecord::make(uint32_t col, LaneMask mask) {
  return {col, mask, std::popcount(mask)};
}

SortBuffer::SortBuffer(int num_classes, std::size_t capacity)
    : classes(static_cast<std::size_t>(num_classes)), class_capacity(capacity) {
  if (num_classes < 1) throw ContractError("SortBuffer: need at least one class");
}

std::size_t SortBuffer::size() const noexcept {
  std::size_t n = extra.size();
  for (const auto& q : classes) n += q.size();
  return n;
}

CondenseResult condense(const Bitmask& mask) {
  CondenseResult out;
  out.cols_total = mask.cols();
  for (std::size_t c = 0; c < mask.cols(); ++c) {
    for (std::size_t r = 0; r < mask.rows(); ++r) {
      if (mask.get(r, c)) {
        out.surviving.push_back(c);
        break;
      }
    }
  }
  out.cols_after = out.surviving.size();
  out.remaining_ratio = out.cols_total ? static_cast<double>(out.cols_after) / static_cast<double>(out.cols_total) : 0.0;
  return out;
}

int classify_sparsity(const ColumnRecord& rec, int lanes, int num_classes) {
  if (rec.nnz < 1 || rec.nnz > lanes) {
    throw ContractError("classify_sparsity: nnz " + std::to_string(rec.nnz) + " outside [1, " +
                        std::to_string(lanes) + "]; empty columns must be condensed first");
  }
  return (rec.nnz - 1) * num_classes / lanes;
}

SortPlacement sortbuffer_insert(SortBuffer& buf, const ColumnRecord& rec, int lanes) {
  SortPlacement where;
  where.requested_class = classify_sparsity(rec, lanes, static_cast<int>(buf.classes.size()));
  for (int cls = where.requested_class; cls >= 0 && cls >= where.requested_class - 1; --cls) {
    auto& q = buf.classes[static_cast<std::size_t>(cls)];
    if (q.size() < buf.class_capacity) {
      q.push_back(rec);
      where.cls = cls;
      return where;
    }
  }
  buf.extra.push_back(rec);
  where.cls = -1;
  where.extra = true;
  return where;
}

std::vector<Block> form_blocks(SortBuffer& buf, std::size_t p) {
  if (p < 1) throw ContractError("form_blocks: p must be >= 1");
  std::vector<Block> blocks;
  Block cur;
  const auto take = [&](std::deque<ColumnRecord>& q) {
    for (const auto& rec : q) {
      cur.push_back(rec);
      if (cur.size() == p) {
        blocks.push_back(std::move(cur));
        cur.clear();
      }
    }
    q.clear();
  };
  for (auto it = buf.classes.rbegin(); it != buf.classes.rend(); ++it) take(*it);
  take(buf.extra);
  if (!cur.empty()) blocks.push_back(std::move(cur));
  return blocks;
}

std::size_t MergedTile::logical_row(const Placement& p) const {
  if (p.i_sw == InputLine::Original) return stripe_base + p.lane;
  const int32_t src = cv[p.lane];
  if (src == kNone) throw ConsistencyError("MergedTile: conflict placement on a lane without a CV entry");
  return static_cast<std::size_t>(src);
}

std::size_t MergedTile::logical_col(const Placement& p) const {
  const int32_t col = origins[p.phys_col][p.w_sw];
  if (col == kNone) throw ConsistencyError("MergedTile: placement selects an empty weight line");
  return static_cast<std::size_t>(col);
}

std::size_t MergedTile::origin_count(std::size_t phys_col) const {
  const auto& o = origins[phys_col];
  return static_cast<std::size_t>(std::count_if(o.begin(), o.end(), [](int32_t v) { return v != kNone; }));
}

std::size_t MergedTile::cv_lanes_used() const {
  return static_cast<std::size_t>(std::count_if(cv.begin(), cv.end(), [](int32_t v) { return v != kNone; }));
}

MergedTile tile_from_block(const Block& block, std::size_t stripe_base, int lanes) {
  check_lanes(lanes);
  MergedTile t;
  t.stripe_base = stripe_base;
  t.lanes = lanes;
  t.blocks_merged = 1;
  t.cv.assign(static_cast<std::size_t>(lanes), kNone);
  t.origins.assign(block.size(), {kNone, kNone, kNone});
  t.occupancy.assign(block.size(), 0);
  for (std::size_t j = 0; j < block.size(); ++j) {
    t.origins[j][0] = static_cast<int32_t>(block[j].orig_col);
    t.occupancy[j] = block[j].mask;
    for (LaneMask m = block[j].mask; m != 0; m &= m - 1) {
      const auto lane = static_cast<uint16_t>(std::countr_zero(m));
      t.placements.push_back({lane, static_cast<uint16_t>(j), InputLine::Original, 0});
    }
  }
  return t;
}

std::string MergeFailure::describe() const {
  return std::string(reason == Reason::NoFreeLane ? "no_free_lane" : "cv_incompatible") + " at physical column " +
         std::to_string(phys_col) + ", lane " + std::to_string(lane) + " (needs input row " +
         std::to_string(source_row) + ")";
}

std::variant<MergedTile, MergeFailure> try_merge(const MergedTile& base, const Block& cand, int lanes) {
  check_lanes(lanes);
  if (base.blocks_merged >= kMaxOrigins) throw ContractError("try_merge: tile already holds three weight lines");
  if (base.lanes != lanes) throw ContractError("try_merge: lane count mismatch");

  MergedTile t = base;
  const auto w_sw = static_cast<uint8_t>(t.blocks_merged);
  if (cand.size() > t.width()) {
    t.origins.resize(cand.size(), {kNone, kNone, kNone});
    t.occupancy.resize(cand.size(), 0);
  }

  std::vector<LaneMask> pending(t.width(), 0);
  for (std::size_t j = 0; j < cand.size(); ++j) {
    t.origins[j][w_sw] = static_cast<int32_t>(cand[j].orig_col);
    const LaneMask free_hits = cand[j].mask & ~t.occupancy[j];
    pending[j] = cand[j].mask & t.occupancy[j];
    t.occupancy[j] |= free_hits;
    for (LaneMask m = free_hits; m != 0; m &= m - 1) {
      const auto lane = static_cast<uint16_t>(std::countr_zero(m));
      t.placements.push_back({lane, static_cast<uint16_t>(j), InputLine::Original, w_sw});
    }
  }

  const LaneMask lane_set = all_lanes(lanes);
  // Lanes whose CV slot can carry `row`.
  const auto cv_ok = [&](std::size_t row) {
    LaneMask ok = 0;
    for (std::size_t l = 0; l < static_cast<std::size_t>(lanes); ++l) {
      if (t.cv[l] == kNone || t.cv[l] == static_cast<int32_t>(row)) ok |= bit(l);
    }
    return ok;
  };

  for (;;) {
    std::size_t best = t.width();
    int best_dof = std::numeric_limits<int>::max();
    LaneMask best_targets = 0;
    for (std::size_t j = 0; j < t.width(); ++j) {
      if (pending[j] == 0) continue;
      const std::size_t row = t.stripe_base + static_cast<std::size_t>(std::countr_zero(pending[j]));
      const LaneMask targets = ~t.occupancy[j] & lane_set & cv_ok(row);
      const int dof = std::popcount(targets);
      if (dof < best_dof) {
        best = j;
        best_dof = dof;
        best_targets = targets;
      }
    }
    if (best == t.width()) break;

    const auto conflict_lane = static_cast<std::size_t>(std::countr_zero(pending[best]));
    const std::size_t row = t.stripe_base + conflict_lane;
    if (best_dof == 0) {
      MergeFailure f;
      f.reason = (t.occupancy[best] & lane_set) == lane_set ? MergeFailure::Reason::NoFreeLane
                                                             : MergeFailure::Reason::CvIncompatible;
      f.phys_col = best;
      f.lane = conflict_lane;
      f.source_row = row;
      return f;
    }
    const auto target = static_cast<std::size_t>(std::countr_zero(best_targets));
    t.occupancy[best] |= bit(target);
    t.cv[target] = static_cast<int32_t>(row);
    t.placements.push_back(
        {static_cast<uint16_t>(target), static_cast<uint16_t>(best), InputLine::Conflict, w_sw});
    pending[best] &= pending[best] - 1;
    ++t.conflicts_resolved;
  }
  ++t.blocks_merged;
  return t;
}

CompactionStats& CompactionStats::operator+=(const CompactionStats& o) {
  rows += o.rows;
  cols_total += o.cols_total;
  cols_after_condense += o.cols_after_condense;
  stripes += o.stripes;
  stripe_cols_total += o.stripe_cols_total;
  stripe_cols_after_condense += o.stripe_cols_after_condense;
  physical_cols_after_merge += o.physical_cols_after_merge;
  tiles += o.tiles;
  merge_attempts += o.merge_attempts;
  merge_successes += o.merge_successes;
  conflict_resolutions += o.conflict_resolutions;
  required_elements += o.required_elements;
  finalize_ratios();
  return *this;
}

void CompactionStats::finalize_ratios() {
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  remaining_ratio_condense = ratio(cols_after_condense, cols_total);
  remaining_ratio_stripe_condense = ratio(stripe_cols_after_condense, stripe_cols_total);
  remaining_ratio_merge = ratio(physical_cols_after_merge, stripe_cols_total);
}

namespace {

// Greedy merge of one stripe's blocks into tiles. With sorted blocks the base
// is the densest remaining block and each phase tries only the sparsest
// remaining one; a failure closes the tile. Unsorted blocks carry no density
// information, so each phase scans the remaining blocks in original order.
void merge_stripe(std::vector<Block> blocks, std::size_t stripe_base, int lanes, bool sorted,
                  std::vector<MergedTile>& tiles, CompactionStats& stats) {
  std::deque<Block> remaining(std::make_move_iterator(blocks.begin()), std::make_move_iterator(blocks.end()));
  while (!remaining.empty()) {
    MergedTile tile = tile_from_block(remaining.front(), stripe_base, lanes);
    remaining.pop_front();
    for (int phase = 0; phase < kMaxOrigins - 1; ++phase) {
      bool merged = false;
      const std::size_t tries = sorted ? std::min<std::size_t>(1, remaining.size()) : remaining.size();
      for (std::size_t n = 0; n < tries; ++n) {
        const std::size_t idx = sorted ? remaining.size() - 1 : n;
        ++stats.merge_attempts;
        auto outcome = try_merge(tile, remaining[idx], lanes);
        if (auto* ok = std::get_if<MergedTile>(&outcome)) {
          tile = std::move(*ok);
          remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(idx));
          ++stats.merge_successes;
          merged = true;
          break;
        }
      }
      if (!merged) break;
    }
    stats.conflict_resolutions += tile.conflicts_resolved;
    stats.physical_cols_after_merge += tile.width();
    ++stats.tiles;
    tiles.push_back(std::move(tile));
  }
}

}  // namespace

ConMergeResult conmerge(const Bitmask& mask, int lanes, std::size_t p, const ConMergeConfig& cfg) {
  check_lanes(lanes);
  if (p < 1) throw ContractError("conmerge: p must be >= 1");
  if (cfg.num_classes < 1) throw ContractError("conmerge: num_classes must be >= 1");

  ConMergeResult out;
  CompactionStats& st = out.stats;
  const std::size_t rows = mask.rows(), cols = mask.cols();
  const auto l = static_cast<std::size_t>(lanes);
  st.rows = rows;
  st.cols_total = cols;
  st.cols_after_condense = condense(mask).cols_after;
  st.required_elements = mask.nnz();
  st.stripes = (rows + l - 1) / l;
  st.stripe_cols_total = st.stripes * cols;

  const auto nc = static_cast<std::size_t>(cfg.num_classes);
  const std::size_t capacity = cfg.class_capacity ? cfg.class_capacity : std::max<std::size_t>(1, (cols + nc - 1) / nc);

  for (std::size_t s = 0; s < st.stripes; ++s) {
    const std::size_t base = s * l;
    const std::size_t height = std::min(l, rows - base);
    std::vector<ColumnRecord> records;
    for (std::size_t c = 0; c < cols; ++c) {
      LaneMask m = 0;
      for (std::size_t r = 0; r < height; ++r) {
        if (mask.get(base + r, c)) m |= bit(r);
      }
      if (m != 0) records.push_back(ColumnRecord::make(static_cast<uint32_t>(c), m));
    }
    st.stripe_cols_after_condense += records.size();

    std::vector<Block> blocks;
    if (cfg.sorted) {
      SortBuffer buf(cfg.num_classes, capacity);
      for (const auto& rec : records) sortbuffer_insert(buf, rec, lanes);
      blocks = form_blocks(buf, p);
    } else {
      for (std::size_t i = 0; i < records.size(); i += p) {
        const auto first = records.begin() + static_cast<std::ptrdiff_t>(i);
        blocks.emplace_back(first, first + static_cast<std::ptrdiff_t>(std::min(p, records.size() - i)));
      }
    }
    merge_stripe(std::move(blocks), base, lanes, cfg.sorted, out.tiles, st);
  }
  st.finalize_ratios();
  return out;
}

MaskedProduct execute_merged(const QTensor& input, const QTensor& weights, const std::vector<MergedTile>& tiles,
                             const Bitmask& mask) {
  if (input.rank() != 2 || weights.rank() != 2) throw ContractError("execute_merged: rank-2 operands required");
  if (input.cols() != weights.rows()) throw ContractError("execute_merged: inner dimensions disagree");
  if (mask.rows() != input.rows() || mask.cols() != weights.cols()) {
    throw ContractError("execute_merged: mask extent mismatch");
  }
  const std::size_t r = input.rows(), d = input.cols(), c = weights.cols();
  const auto pa = pack_rows(input);
  const auto pw = pack_columns(weights);
  const auto& k = simd::kernels();

  std::vector<int32_t> out(r * c, 0);
  Bitmask produced(r, c);
  for (const auto& tile : tiles) {
    for (const auto& pl : tile.placements) {
      const std::size_t row = tile.logical_row(pl);
      const std::size_t col = tile.logical_col(pl);
      if (row >= r || col >= c) throw ConsistencyError("execute_merged: placement outside the output matrix");
      if (!mask.get(row, col)) {
        throw ConsistencyError("execute_merged: placement at unmasked (" + std::to_string(row) + ", " +
                               std::to_string(col) + ")");
      }
      if (produced.get(row, col)) {
        throw ConsistencyError("execute_merged: duplicate placement for (" + std::to_string(row) + ", " +
                               std::to_string(col) + ")");
      }
      const int64_t acc = k.dot_i16(pa.data() + row * d, pw.data() + col * d, d);
      if (!fits_bits(acc, 32)) throw RangeError("execute_merged: 32-bit accumulator overflow");
      out[row * c + col] = static_cast<int32_t>(acc);
      produced.set(row, col);
    }
  }
  if (!(produced == mask)) {
    throw ConsistencyError("execute_merged: tiles cover " + std::to_string(produced.nnz()) + " of " +
                           std::to_string(mask.nnz()) + " required elements");
  }
  return {QTensor({r, c}, 32, input.scale() + weights.scale(), std::move(out)), std::move(produced)};
}

std::size_t merge_effort(const Bitmask& mask, int lanes, std::size_t p, ConMergeConfig cfg, bool sorted) {
  cfg.sorted = sorted;
  return conmerge(mask, lanes, p, cfg).stats.merge_attempts;
}

}  // namespace exion::cm
