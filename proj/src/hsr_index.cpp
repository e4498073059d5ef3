#include "hsrnet/hsr_index.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hsrnet/rng.hpp"

namespace hsrnet {

namespace {
constexpr double kRadiusSlack = 1e-13;  // relative inflation of stored ball radii
constexpr double kBoundMargin = 1e-12;  // relative safety margin on prune/bulk decisions
constexpr double kBoxGate = 0.55;       // ball-interval fraction past which the box is consulted

double dot_n(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += a[j] * b[j];
    return acc;
}

double dist2(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        const double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

// Ascending sort for reported ids. Nonnegative ids take a byte-wise LSD radix
// pass, which beats the comparison sort on the thousands-of-ids outputs the
// training loop sees per query.
void sort_ids(std::vector<int>& ids) {
    const std::size_t n = ids.size();
    if (n < 64) {
        std::sort(ids.begin(), ids.end());
        return;
    }
    int lo = ids[0], hi = ids[0];
    for (int v : ids) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo < 0) {
        std::sort(ids.begin(), ids.end());
        return;
    }
    std::vector<int> buf(n);
    int* src = ids.data();
    int* dst = buf.data();
    for (int shift = 0; shift < 32 && (static_cast<unsigned>(hi) >> shift) != 0; shift += 8) {
        std::size_t count[257] = {0};
        for (std::size_t i = 0; i < n; ++i)
            count[((static_cast<unsigned>(src[i]) >> shift) & 0xffu) + 1] += 1;
        for (int b = 0; b < 256; ++b) count[b + 1] += count[b];
        for (std::size_t i = 0; i < n; ++i)
            dst[count[(static_cast<unsigned>(src[i]) >> shift) & 0xffu]++] = src[i];
        std::swap(src, dst);
    }
    if (src != ids.data()) std::copy(buf.begin(), buf.end(), ids.begin());
}
}  // namespace

HsrIndex::HsrIndex(int dim, HsrConfig cfg) : dim_(dim), cfg_(cfg) {
    if (dim < 1) throw std::invalid_argument("HsrIndex: dim must be >= 1");
    if (cfg_.leaf_size < 1) throw std::invalid_argument("HsrIndex: leaf_size must be >= 1");
    split_rng_state_ = stream_seed(cfg_.seed, "hsr-split");
}

std::int32_t HsrIndex::leaf_lookup(int id) const {
    const long long off = static_cast<long long>(id) - slot_base_;
    if (off >= 0 && off < static_cast<long long>(slot_.size()))
        return slot_[static_cast<std::size_t>(off)];
    auto it = overflow_.find(id);
    return it == overflow_.end() ? -1 : it->second;
}

bool HsrIndex::adopt_into_window(int id) {
    const long long cap = std::max<long long>(1024, 4 * (static_cast<long long>(live_) + 1));
    if (slot_.empty()) {
        slot_base_ = id;
        slot_.assign(1, -1);
        return true;
    }
    const long long off = static_cast<long long>(id) - slot_base_;
    if (off < 0) return false;  // window grows upward only
    if (off + 1 > cap) return false;
    slot_.resize(static_cast<std::size_t>(off) + 1, -1);
    return true;
}

void HsrIndex::leaf_assign(int id, std::int32_t node) {
    const long long off = static_cast<long long>(id) - slot_base_;
    if (off >= 0 && off < static_cast<long long>(slot_.size())) {
        slot_[static_cast<std::size_t>(off)] = node;
        return;
    }
    if (adopt_into_window(id)) {
        slot_[static_cast<std::size_t>(id - slot_base_)] = node;
        return;
    }
    overflow_[id] = node;
}

void HsrIndex::leaf_erase(int id) {
    const long long off = static_cast<long long>(id) - slot_base_;
    if (off >= 0 && off < static_cast<long long>(slot_.size())) {
        slot_[static_cast<std::size_t>(off)] = -1;
        return;
    }
    overflow_.erase(id);
}

std::int32_t HsrIndex::alloc_node() {
    if (!free_nodes_.empty()) {
        const std::int32_t idx = free_nodes_.back();
        free_nodes_.pop_back();
        nodes_[static_cast<std::size_t>(idx)] = NodeRec{};
        return idx;
    }
    const std::int32_t idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    geom_.resize(geom_.size() + 3 * static_cast<std::size_t>(dim_) + 2, 0.0);
    cball_.resize(cball_.size() + 2 * (static_cast<std::size_t>(dim_) + 2), 0.0);
    return idx;
}

std::int32_t HsrIndex::alloc_leaf() {
    if (!free_leaves_.empty()) {
        const std::int32_t idx = free_leaves_.back();
        free_leaves_.pop_back();
        LeafRec& leaf = leaves_[static_cast<std::size_t>(idx)];
        leaf.entries.clear();  // keeps capacity for the refill
        leaf.off = 0;
        leaf.cap = 0;
        return idx;
    }
    const std::int32_t idx = static_cast<std::int32_t>(leaves_.size());
    leaves_.emplace_back();
    return idx;
}

std::size_t HsrIndex::pool_alloc(std::size_t count) {
    const std::size_t off = pool_.size();
    pool_.resize(off + count * static_cast<std::size_t>(dim_), 0.0);
    return off;
}

HsrIndex HsrIndex::build(int dim, const std::vector<LiftedPoint>& points, HsrConfig cfg) {
    HsrIndex idx(dim, cfg);
    if (points.empty()) return idx;

    std::unordered_set<int> seen;
    seen.reserve(points.size());
    int id_min = points.front().id, id_max = points.front().id;
    for (const auto& pt : points) {
        if (static_cast<int>(pt.p.size()) != dim)
            throw std::invalid_argument("HsrIndex::build: point dimension mismatch");
        if (!seen.insert(pt.id).second)
            throw DuplicateIdError("HsrIndex::build: duplicate id " + std::to_string(pt.id));
        id_min = std::min(id_min, pt.id);
        id_max = std::max(id_max, pt.id);
    }

    const long long range = static_cast<long long>(id_max) - id_min + 1;
    if (range <= std::max<long long>(1024, 4 * static_cast<long long>(points.size()))) {
        idx.slot_base_ = id_min;
        idx.slot_.assign(static_cast<std::size_t>(range), -1);
    }

    std::vector<BuildItem> items;
    items.reserve(points.size());
    for (const auto& pt : points) items.push_back({pt.id, pt.p.data(), 0.0});
    idx.pool_.reserve(points.size() * static_cast<std::size_t>(dim));
    idx.root_ = idx.build_rec(items, 0, items.size(), -1);
    idx.live_ = points.size();
    return idx;
}

std::int32_t HsrIndex::build_rec(std::vector<BuildItem>& items, std::size_t lo, std::size_t hi,
                                 std::int32_t parent) {
    const std::size_t count = hi - lo;
    const std::int32_t ni = alloc_node();
    {
        NodeRec& node = nodes_[static_cast<std::size_t>(ni)];
        node.parent = parent;
        node.live = static_cast<std::int32_t>(count);
    }

    double* ctr = geom(ni);
    double* blo = ctr + dim_ + 2;
    double* bhi = ctr + 2 * dim_ + 2;
    for (int j = 0; j < dim_; ++j) {
        ctr[j] = 0.0;
        blo[j] = items[lo].p[j];
        bhi[j] = items[lo].p[j];
    }
    for (std::size_t i = lo; i < hi; ++i) {
        const double* p = items[i].p;
        for (int j = 0; j < dim_; ++j) {
            ctr[j] += p[j];
            blo[j] = std::min(blo[j], p[j]);
            bhi[j] = std::max(bhi[j], p[j]);
        }
    }
    for (int j = 0; j < dim_; ++j) ctr[j] /= static_cast<double>(count);
    ctr[dim_ + 1] = std::sqrt(dot_n(ctr, ctr, dim_));
    double max_d2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) max_d2 = std::max(max_d2, dist2(items[i].p, ctr, dim_));
    ctr[dim_] = std::sqrt(max_d2) * (1.0 + kRadiusSlack);

    if (count <= static_cast<std::size_t>(cfg_.leaf_size)) {
        const std::int32_t li = alloc_leaf();
        nodes_[static_cast<std::size_t>(ni)].leaf = li;
        LeafRec& leaf = leaves_[static_cast<std::size_t>(li)];
        leaf.cap = static_cast<std::int32_t>(count);
        leaf.off = pool_alloc(count);
        leaf.entries.reserve(count);
        double* cols = leaf_cols(leaf);
        for (std::size_t i = lo; i < hi; ++i) {
            leaf.entries.push_back({items[i].id, true});
            for (int j = 0; j < dim_; ++j)
                cols[static_cast<std::size_t>(j) * count + (i - lo)] = items[i].p[j];
        }
        for (std::size_t i = lo; i < hi; ++i) leaf_assign(items[i].id, ni);
        return ni;
    }

    if (cfg_.split == SplitRule::WidestCoordinate) {
        int best_c = 0;
        double best_spread = -1.0;
        for (int j = 0; j < dim_; ++j) {
            const double spread = bhi[j] - blo[j];
            if (spread > best_spread) {
                best_spread = spread;
                best_c = j;
            }
        }
        for (std::size_t i = lo; i < hi; ++i) items[i].key = items[i].p[best_c];
    } else {
        Rng rng(split_rng_state_);
        split_rng_state_ = rng.next_u64();
        std::vector<double> dir(static_cast<std::size_t>(dim_));
        double norm = 0.0;
        do {
            norm = 0.0;
            for (int j = 0; j < dim_; ++j) {
                dir[static_cast<std::size_t>(j)] = rng.normal();
                norm += dir[static_cast<std::size_t>(j)] * dir[static_cast<std::size_t>(j)];
            }
        } while (norm == 0.0);
        for (std::size_t i = lo; i < hi; ++i) items[i].key = dot_n(items[i].p, dir.data(), dim_);
    }

    // Lower median; (key, id) total order makes the partition deterministic.
    const std::size_t mid = lo + (count - 1) / 2;
    std::nth_element(items.begin() + lo, items.begin() + mid, items.begin() + hi,
                     [](const BuildItem& a, const BuildItem& b) {
                         if (a.key != b.key) return a.key < b.key;
                         return a.id < b.id;
                     });
    const std::int32_t left = build_rec(items, lo, mid + 1, ni);
    nodes_[static_cast<std::size_t>(ni)].left = left;
    const std::int32_t right = build_rec(items, mid + 1, hi, ni);
    nodes_[static_cast<std::size_t>(ni)].right = right;
    double* cb = cball(ni);
    std::copy(geom(left), geom(left) + dim_ + 2, cb);
    std::copy(geom(right), geom(right) + dim_ + 2, cb + dim_ + 2);
    return ni;
}

void HsrIndex::insert(const LiftedPoint& point) {
    if (static_cast<int>(point.p.size()) != dim_)
        throw std::invalid_argument("HsrIndex::insert: point dimension mismatch");
    insert(point.id, point.p.data());
}

void HsrIndex::detach_leaf_entry(std::int32_t node, int id) {
    LeafRec& leaf = leaves_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].leaf)];
    // Swap the victim to the end of the alive prefix and tombstone it there.
    const std::size_t last = static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].live) - 1;
    for (std::size_t k = 0; k <= last; ++k) {
        if (leaf.entries[k].id != id) continue;
        if (k != last) {
            leaf.entries[k] = leaf.entries[last];
            for (int j = 0; j < dim_; ++j) {
                double* col = leaf_cols(leaf) + static_cast<std::size_t>(j) * leaf.cap;
                std::swap(col[k], col[last]);
            }
        }
        leaf.entries[last] = {id, false};
        break;
    }
    leaf_erase(id);
}

bool HsrIndex::append_leaf_entry(std::int32_t node, int id, const double* p) {
    // The new point extends the alive prefix; a tombstone sitting there is
    // overwritten, physically gone, so the path above sheds one unit of debt.
    LeafRec& leaf = leaves_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].leaf)];
    const std::size_t pos = static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].live) - 1;
    const bool reused = pos < leaf.entries.size();
    if (reused) {
        leaf.entries[pos] = {id, true};
    } else {
        leaf.entries.push_back({id, true});
        if (static_cast<std::int32_t>(leaf.entries.size()) > leaf.cap) {
            // Regrow into a fresh pool region; capacity never needs to exceed
            // the overflow bound because larger leaves are rebuilt at once.
            const std::int32_t limit = cfg_.overflow_factor * cfg_.leaf_size + 1;
            const std::int32_t need = static_cast<std::int32_t>(leaf.entries.size());
            const std::int32_t new_cap = std::min(limit, std::max(need, 2 * leaf.cap));
            const std::size_t new_off = pool_alloc(static_cast<std::size_t>(new_cap));
            const double* src = pool_.data() + leaf.off;
            double* dst = pool_.data() + new_off;
            for (int j = 0; j < dim_; ++j)
                for (std::size_t k = 0; k + 1 < leaf.entries.size(); ++k)
                    dst[static_cast<std::size_t>(j) * new_cap + k] =
                        src[static_cast<std::size_t>(j) * leaf.cap + k];
            leaf.off = new_off;
            leaf.cap = new_cap;
        }
    }
    double* cols = leaf_cols(leaf);
    for (int j = 0; j < dim_; ++j) cols[static_cast<std::size_t>(j) * leaf.cap + pos] = p[j];
    leaf_assign(id, node);
    return reused;
}

void HsrIndex::insert(int id, const double* p) {
    if (leaf_lookup(id) >= 0)
        throw DuplicateIdError("HsrIndex::insert: id already live: " + std::to_string(id));

    if (root_ < 0) {
        std::vector<BuildItem> items{{id, p, 0.0}};
        root_ = build_rec(items, 0, 1, -1);
        live_ = 1;
        return;
    }

    std::int32_t ni = root_;
    std::int32_t parent = -1;
    while (true) {
        NodeRec& node = nodes_[static_cast<std::size_t>(ni)];
        node.live += 1;
        node.inserted += 1;
        double* ctr = geom(ni);
        const double d2 = dist2(p, ctr, dim_);
        if (d2 > ctr[dim_] * ctr[dim_]) {
            ctr[dim_] = std::sqrt(d2) * (1.0 + kRadiusSlack);
            if (parent >= 0) {
                // Keep the parent's mirrored child ball in sync.
                const bool right = nodes_[static_cast<std::size_t>(parent)].right == ni;
                cball(parent)[(right ? dim_ + 2 : 0) + dim_] = ctr[dim_];
            }
        }
        double* blo = ctr + dim_ + 2;
        double* bhi = ctr + 2 * dim_ + 2;
        for (int j = 0; j < dim_; ++j) {
            blo[j] = std::min(blo[j], p[j]);
            bhi[j] = std::max(bhi[j], p[j]);
        }
        if (node.leaf >= 0) break;
        const double dl = dist2(p, geom(node.left), dim_);
        const double dr = dist2(p, geom(node.right), dim_);
        parent = ni;
        ni = dl <= dr ? node.left : node.right;
    }

    const bool reused = append_leaf_entry(ni, id, p);
    live_ += 1;

    // Highest ancestor over the debt threshold wins so the whole degraded
    // region is compacted at once.
    std::int32_t victim = -1;
    const LeafRec& leaf = leaves_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(ni)].leaf)];
    if (static_cast<std::int32_t>(leaf.entries.size()) > cfg_.overflow_factor * cfg_.leaf_size)
        victim = ni;
    for (std::int32_t n = ni; n >= 0; n = nodes_[static_cast<std::size_t>(n)].parent) {
        NodeRec& rec = nodes_[static_cast<std::size_t>(n)];
        if (reused) rec.tomb -= 1;
        const double debt = static_cast<double>(rec.tomb + rec.inserted);
        if (debt > cfg_.rebuild_ratio * static_cast<double>(std::max<std::int32_t>(rec.live, 1)))
            victim = n;
    }
    if (victim >= 0) rebuild_subtree(victim);
}

void HsrIndex::remove(int id) {
    const std::int32_t ni = leaf_lookup(id);
    if (ni < 0) throw MissingIdError("HsrIndex::remove: id not live: " + std::to_string(id));
    detach_leaf_entry(ni, id);
    std::int32_t victim = -1;
    for (std::int32_t n = ni; n >= 0; n = nodes_[static_cast<std::size_t>(n)].parent) {
        NodeRec& rec = nodes_[static_cast<std::size_t>(n)];
        rec.live -= 1;
        rec.tomb += 1;
        const double debt = static_cast<double>(rec.tomb + rec.inserted);
        if (debt > cfg_.rebuild_ratio * static_cast<double>(std::max<std::int32_t>(rec.live, 1)))
            victim = n;
    }
    live_ -= 1;
    if (victim >= 0) rebuild_subtree(victim);
}

void HsrIndex::update(int id, const double* p) {
    const std::int32_t ni = leaf_lookup(id);
    if (ni < 0) throw MissingIdError("HsrIndex::update: id not live: " + std::to_string(id));

    // Walk to the root testing each stored ball and box against the new
    // position and remember the highest violated node. Bounds at and above its
    // parent still contain the move, so they stay valid supersets untouched
    // and the relocation is invisible there, exactly like the fully contained
    // overwrite; only the subtree below accrues structural debt.
    std::int32_t top_fail = -1;
    for (std::int32_t a = ni; a >= 0; a = nodes_[static_cast<std::size_t>(a)].parent) {
        const double* ctr = geom(a);
        bool out = dist2(p, ctr, dim_) > ctr[dim_] * ctr[dim_];
        if (!out) {
            const double* blo = ctr + dim_ + 2;
            const double* bhi = ctr + 2 * dim_ + 2;
            for (int j = 0; j < dim_; ++j) {
                if (p[j] < blo[j] || p[j] > bhi[j]) {
                    out = true;
                    break;
                }
            }
        }
        if (out) top_fail = a;
    }

    if (top_fail < 0) {
        const NodeRec& rec = nodes_[static_cast<std::size_t>(ni)];
        LeafRec& leaf = leaves_[static_cast<std::size_t>(rec.leaf)];
        double* cols = leaf_cols(leaf);
        for (std::size_t k = 0; k < static_cast<std::size_t>(rec.live); ++k) {
            if (leaf.entries[k].id != id) continue;
            for (int j = 0; j < dim_; ++j) cols[static_cast<std::size_t>(j) * leaf.cap + k] = p[j];
            return;
        }
    }

    const std::int32_t anchor = top_fail >= 0 ? nodes_[static_cast<std::size_t>(top_fail)].parent : -1;
    if (anchor < 0) {
        // Even the root bound broke (or the id map was stale): full cycle.
        remove(id);
        insert(id, p);
        return;
    }

    // Detach below the anchor only.
    detach_leaf_entry(ni, id);
    std::int32_t victim = -1;
    for (std::int32_t n = ni; n != anchor; n = nodes_[static_cast<std::size_t>(n)].parent) {
        NodeRec& rec = nodes_[static_cast<std::size_t>(n)];
        rec.live -= 1;
        rec.tomb += 1;
        const double debt = static_cast<double>(rec.tomb + rec.inserted);
        if (debt > cfg_.rebuild_ratio * static_cast<double>(std::max<std::int32_t>(rec.live, 1)))
            victim = n;
    }
    if (victim >= 0) rebuild_subtree(victim);

    // Reattach by the nearer-center descent, widening bounds strictly below
    // the anchor; the anchor's own bounds were just verified to contain p.
    std::int32_t cur = anchor;
    while (nodes_[static_cast<std::size_t>(cur)].leaf < 0) {
        const NodeRec& rec = nodes_[static_cast<std::size_t>(cur)];
        const double dl = dist2(p, geom(rec.left), dim_);
        const double dr = dist2(p, geom(rec.right), dim_);
        const std::int32_t child = dl <= dr ? rec.left : rec.right;
        NodeRec& crec = nodes_[static_cast<std::size_t>(child)];
        crec.live += 1;
        crec.inserted += 1;
        double* ctr = geom(child);
        const double d2 = dist2(p, ctr, dim_);
        if (d2 > ctr[dim_] * ctr[dim_]) {
            ctr[dim_] = std::sqrt(d2) * (1.0 + kRadiusSlack);
            // Keep the parent's mirrored child ball in sync.
            cball(cur)[(rec.right == child ? dim_ + 2 : 0) + dim_] = ctr[dim_];
        }
        double* blo = ctr + dim_ + 2;
        double* bhi = ctr + 2 * dim_ + 2;
        for (int j = 0; j < dim_; ++j) {
            blo[j] = std::min(blo[j], p[j]);
            bhi[j] = std::max(bhi[j], p[j]);
        }
        cur = child;
    }
    const bool reused = append_leaf_entry(cur, id, p);

    std::int32_t victim2 = -1;
    const LeafRec& nl = leaves_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(cur)].leaf)];
    if (static_cast<std::int32_t>(nl.entries.size()) > cfg_.overflow_factor * cfg_.leaf_size)
        victim2 = cur;
    for (std::int32_t n = cur; n != anchor; n = nodes_[static_cast<std::size_t>(n)].parent) {
        NodeRec& rec = nodes_[static_cast<std::size_t>(n)];
        if (reused) rec.tomb -= 1;
        const double debt = static_cast<double>(rec.tomb + rec.inserted);
        if (debt > cfg_.rebuild_ratio * static_cast<double>(std::max<std::int32_t>(rec.live, 1)))
            victim2 = n;
    }
    if (victim2 >= 0) rebuild_subtree(victim2);
}

void HsrIndex::rebuild_subtree(std::int32_t node) {
    // Gather live points into flat scratch and recycle the subtree's arena
    // slots; no per-point allocations.
    scratch_ids_.clear();
    scratch_coords_.clear();
    scratch_ids_.reserve(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].live));
    scratch_coords_.reserve(scratch_ids_.capacity() * static_cast<std::size_t>(dim_));
    const std::int32_t parent = nodes_[static_cast<std::size_t>(node)].parent;
    const std::int32_t removed_tombs = nodes_[static_cast<std::size_t>(node)].tomb;

    scratch_stack_.clear();
    scratch_stack_.push_back(node);
    while (!scratch_stack_.empty()) {
        const std::int32_t ni = scratch_stack_.back();
        scratch_stack_.pop_back();
        const NodeRec& rec = nodes_[static_cast<std::size_t>(ni)];
        if (rec.leaf >= 0) {
            const LeafRec& leaf = leaves_[static_cast<std::size_t>(rec.leaf)];
            for (std::size_t k = 0; k < static_cast<std::size_t>(rec.live); ++k) {
                scratch_ids_.push_back(leaf.entries[k].id);
                const double* cols = leaf_cols(leaf);
                for (int j = 0; j < dim_; ++j)
                    scratch_coords_.push_back(cols[static_cast<std::size_t>(j) * leaf.cap + k]);
            }
            free_leaves_.push_back(rec.leaf);
        } else {
            scratch_stack_.push_back(rec.left);
            scratch_stack_.push_back(rec.right);
        }
        free_nodes_.push_back(ni);
    }

    std::int32_t fresh = -1;
    if (scratch_ids_.empty()) {
        if (parent < 0) {
            root_ = -1;
            nodes_.clear();
            geom_.clear();
            cball_.clear();
            free_nodes_.clear();
            pool_.clear();
        } else {
            // Keep the arity-2 shape: replace with an empty leaf.
            fresh = alloc_node();
            nodes_[static_cast<std::size_t>(fresh)].parent = parent;
            nodes_[static_cast<std::size_t>(fresh)].leaf = alloc_leaf();
            double* g = geom(fresh);
            for (int j = 0; j < 3 * dim_ + 2; ++j) g[j] = 0.0;
        }
    } else {
        if (parent < 0) {
            // Full rebuild: reset the arenas so the fresh tree and its leaf
            // regions are laid out in traversal order.
            nodes_.clear();
            geom_.clear();
            cball_.clear();
            free_nodes_.clear();
            pool_.clear();
        }
        scratch_items_.clear();
        scratch_items_.reserve(scratch_ids_.size());
        for (std::size_t i = 0; i < scratch_ids_.size(); ++i)
            scratch_items_.push_back({scratch_ids_[i], scratch_coords_.data() + i * dim_, 0.0});
        fresh = build_rec(scratch_items_, 0, scratch_items_.size(), parent);
    }

    if (parent < 0) {
        root_ = fresh;
    } else {
        NodeRec& prec = nodes_[static_cast<std::size_t>(parent)];
        const bool right = prec.left != node;
        if (right)
            prec.right = fresh;
        else
            prec.left = fresh;
        std::copy(geom(fresh), geom(fresh) + dim_ + 2,
                  cball(parent) + (right ? dim_ + 2 : 0));
        for (std::int32_t n = parent; n >= 0; n = nodes_[static_cast<std::size_t>(n)].parent)
            nodes_[static_cast<std::size_t>(n)].tomb -= removed_tombs;
    }
}

void HsrIndex::collect_live(std::int32_t node, std::vector<int>& out, QueryStats* stats) const {
    if (stats) stats->nodes_visited += 1;
    const NodeRec& rec = nodes_[static_cast<std::size_t>(node)];
    if (rec.leaf >= 0) {
        if (stats) stats->leaves_visited += 1;
        const LeafRec& leaf = leaves_[static_cast<std::size_t>(rec.leaf)];
        for (std::size_t k = 0; k < static_cast<std::size_t>(rec.live); ++k)
            out.push_back(leaf.entries[k].id);
        return;
    }
    if (nodes_[static_cast<std::size_t>(rec.left)].live > 0) collect_live(rec.left, out, stats);
    if (nodes_[static_cast<std::size_t>(rec.right)].live > 0) collect_live(rec.right, out, stats);
}

void HsrIndex::query_walk(std::int32_t node, const double* q, double qnorm, double tau,
                          std::vector<int>& out, QueryStats* stats) const {
    // Explicit stack of entered nodes; depth is fixed by the last full
    // (re)build, so 128 frames cover any realistic point count.
    std::int32_t stack[128];
    int sp = 0;

    // Tests one ball run (center | radius | ||center||), then prunes,
    // bulk-reports, or enters the owning subtree. Exactness never depends on
    // which bound fires: both are conservative with their own guard bands,
    // and an entered subtree is resolved by exact per-point predicates.
    const auto test_ball = [&](const double* b, std::int32_t child) {
        if (stats) stats->nodes_visited += 1;
        const double s = dot_n(q, b, dim_);
        const double rb = b[dim_] * qnorm;
        // Guard band for floating-point slack between bound arithmetic and the
        // exact per-point predicate; decisions inside the band fall through to
        // per-point tests. qnorm*||center|| dominates the dot's rounding error
        // even when the terms cancel.
        const double ball_margin = kBoundMargin * (1.0 + qnorm * b[dim_ + 1] + rb);

        bool prune = s + rb + ball_margin <= tau;
        bool bulk = !prune && s - rb - ball_margin > tau;
        // The box bound beats the ball by a bounded factor at best, so consult
        // it only when tau sits deep inside the ball interval; a skipped box
        // test just means the subtree is resolved point by point.
        if (!prune && !bulk && (s + kBoxGate * rb <= tau || s - kBoxGate * rb > tau)) {
            const double* ctr = geom(child);
            const double* blo = ctr + dim_ + 2;
            const double* bhi = ctr + 2 * dim_ + 2;
            double box_ub = 0.0, box_lb = 0.0, box_scale = 0.0;
            for (int j = 0; j < dim_; ++j) {
                const double t_lo = q[j] * blo[j];
                const double t_hi = q[j] * bhi[j];
                box_ub += std::max(t_lo, t_hi);
                box_lb += std::min(t_lo, t_hi);
                box_scale += std::max(std::fabs(t_lo), std::fabs(t_hi));
            }
            const double margin = kBoundMargin * (1.0 + std::fabs(s) + rb + box_scale);
            prune = box_ub + margin <= tau;
            bulk = !prune && box_lb - margin > tau;
        }

        if (prune) {
            if (stats) stats->pruned_subtrees += 1;
            return;
        }
        if (bulk) {
            if (stats) {
                stats->bulk_subtrees += 1;
                stats->nodes_visited -= 1;  // collect_live counts this node again
            }
            const NodeRec& rec = nodes_[static_cast<std::size_t>(child)];
            out.reserve(out.size() + static_cast<std::size_t>(rec.live));
            collect_live(child, out, stats);
            return;
        }
        stack[sp++] = child;
    };

    // The root has no parent mirroring its ball, but its geometry run starts
    // with the same (center | radius | ||center||) prefix.
    test_ball(geom(node), node);

    while (sp > 0) {
        const std::int32_t ni = stack[--sp];
        const NodeRec& rec = nodes_[static_cast<std::size_t>(ni)];
        if (rec.leaf >= 0) {
            const std::size_t nlive = static_cast<std::size_t>(rec.live);
            if (stats) {
                stats->leaves_visited += 1;
                stats->point_tests += static_cast<long long>(nlive);
            }
            // Accumulate per point in ascending coordinate order, exactly the
            // brute-force dot; the column-major layout lets this vectorize.
            const LeafRec& leaf = leaves_[static_cast<std::size_t>(rec.leaf)];
            const std::size_t cap = static_cast<std::size_t>(leaf.cap);
            const double* cols = leaf_cols(leaf);
            for (std::size_t base = 0; base < nlive; base += 64) {
                const std::size_t w = std::min<std::size_t>(64, nlive - base);
                double acc[64];
                for (std::size_t k = 0; k < w; ++k) acc[k] = 0.0;
                for (int j = 0; j < dim_; ++j) {
                    const double qj = q[j];
                    const double* cj = cols + static_cast<std::size_t>(j) * cap + base;
                    for (std::size_t k = 0; k < w; ++k) acc[k] += cj[k] * qj;
                }
                for (std::size_t k = 0; k < w; ++k)
                    if (acc[k] > tau) out.push_back(leaf.entries[base + k].id);
            }
            continue;
        }
        // Both children's balls sit in one contiguous run owned by this node;
        // a pruned child costs no read of its own records.
        const double* cb = cball(ni);
        const int before = sp;
        test_ball(cb, rec.left);
        test_ball(cb + dim_ + 2, rec.right);
        if (sp - before == 2) std::swap(stack[sp - 1], stack[sp - 2]);  // left first
        if (sp > before) {
            const std::int32_t next = stack[sp - 1];
            __builtin_prefetch(&nodes_[static_cast<std::size_t>(next)]);
            __builtin_prefetch(cball(next));
        }
    }
}

ActiveSet HsrIndex::query(const std::vector<double>& q, double tau, QueryStats* stats) const {
    if (static_cast<int>(q.size()) != dim_)
        throw std::invalid_argument("HsrIndex::query: query dimension mismatch");
    ActiveSet result;
    if (root_ < 0) return result;
    const double qnorm = std::sqrt(dot_n(q.data(), q.data(), dim_));
    result.ids.reserve(64);
    query_walk(root_, q.data(), qnorm, tau, result.ids, stats);
    sort_ids(result.ids);
    if (stats) stats->reported += static_cast<long long>(result.ids.size());
    return result;
}

double HsrIndex::norm_bound() const {
    if (root_ < 0 || nodes_[static_cast<std::size_t>(root_)].live == 0) return 0.0;
    const double* ctr = geom(root_);
    return (ctr[dim_ + 1] + ctr[dim_]) * (1.0 + 1e-12);
}

TreeStats HsrIndex::tree_stats() const {
    TreeStats ts;
    if (root_ < 0) return ts;
    struct Frame {
        std::int32_t n;
        int depth;
    };
    std::vector<Frame> stack{{root_, 1}};
    while (!stack.empty()) {
        auto [ni, depth] = stack.back();
        stack.pop_back();
        const NodeRec& rec = nodes_[static_cast<std::size_t>(ni)];
        ts.nodes += 1;
        ts.max_depth = std::max(ts.max_depth, depth);
        if (rec.leaf >= 0) {
            ts.leaves += 1;
            const LeafRec& leaf = leaves_[static_cast<std::size_t>(rec.leaf)];
            for (const auto& e : leaf.entries)
                if (!e.alive) ts.tombstones += 1;
        } else {
            stack.push_back({rec.left, depth + 1});
            stack.push_back({rec.right, depth + 1});
        }
    }
    ts.live = static_cast<long long>(live_);
    return ts;
}

void HsrIndex::check_invariants() const {
    long long mapped = 0;
    for (const std::int32_t ni : slot_)
        if (ni >= 0) mapped += 1;
    mapped += static_cast<long long>(overflow_.size());
    if (mapped != static_cast<long long>(live_))
        throw std::logic_error("HsrIndex invariant: id map size wrong");

    long long seen_live = 0;
    if (root_ < 0) {
        if (live_ != 0) throw std::logic_error("HsrIndex invariant: empty tree with live ids");
        return;
    }
    std::vector<std::int32_t> stack{root_};
    std::vector<double> p(static_cast<std::size_t>(dim_));
    while (!stack.empty()) {
        const std::int32_t ni = stack.back();
        stack.pop_back();
        const NodeRec& n = nodes_[static_cast<std::size_t>(ni)];
        if (n.leaf >= 0) {
            const LeafRec& leaf = leaves_[static_cast<std::size_t>(n.leaf)];
            if (static_cast<std::int32_t>(leaf.entries.size()) > leaf.cap && leaf.cap > 0)
                throw std::logic_error("HsrIndex invariant: leaf overfull for its capacity");
            int alive = 0, dead = 0;
            const double* cols = leaf_cols(leaf);
            for (std::size_t k = 0; k < leaf.entries.size(); ++k) {
                for (int j = 0; j < dim_; ++j)
                    p[static_cast<std::size_t>(j)] = cols[static_cast<std::size_t>(j) * leaf.cap + k];
                if (leaf.entries[k].alive != (k < static_cast<std::size_t>(n.live)))
                    throw std::logic_error("HsrIndex invariant: alive prefix broken");
                if (leaf.entries[k].alive) {
                    ++alive;
                    if (leaf_lookup(leaf.entries[k].id) != ni)
                        throw std::logic_error("HsrIndex invariant: id map out of sync");
                    // Containment in every ancestor's ball and box.
                    for (std::int32_t a = ni; a >= 0; a = nodes_[static_cast<std::size_t>(a)].parent) {
                        const double* ctr = geom(a);
                        const double dd = std::sqrt(dist2(p.data(), ctr, dim_));
                        if (dd > ctr[dim_] * (1.0 + 1e-12) + 1e-12)
                            throw std::logic_error("HsrIndex invariant: ball containment violated");
                        for (int j = 0; j < dim_; ++j) {
                            if (p[static_cast<std::size_t>(j)] < ctr[dim_ + 2 + j] ||
                                p[static_cast<std::size_t>(j)] > ctr[2 * dim_ + 2 + j])
                                throw std::logic_error(
                                    "HsrIndex invariant: box containment violated");
                        }
                    }
                } else {
                    ++dead;
                }
            }
            if (alive != n.live || dead != n.tomb)
                throw std::logic_error("HsrIndex invariant: leaf counters wrong");
            seen_live += alive;
        } else {
            const NodeRec& l = nodes_[static_cast<std::size_t>(n.left)];
            const NodeRec& r = nodes_[static_cast<std::size_t>(n.right)];
            if (l.parent != ni || r.parent != ni)
                throw std::logic_error("HsrIndex invariant: arena linkage broken");
            if (n.live != l.live + r.live || n.tomb != l.tomb + r.tomb)
                throw std::logic_error("HsrIndex invariant: internal counters wrong");
            stack.push_back(n.left);
            stack.push_back(n.right);
        }
    }
    if (seen_live != static_cast<long long>(live_))
        throw std::logic_error("HsrIndex invariant: live total wrong");
}

ActiveSet brute_force_query(const std::vector<LiftedPoint>& points, const std::vector<double>& q,
                            double tau) {
    ActiveSet out;
    for (const auto& pt : points) {
        if (pt.p.size() != q.size())
            throw std::invalid_argument("brute_force_query: dimension mismatch");
        if (dot_n(pt.p.data(), q.data(), static_cast<int>(q.size())) > tau) out.ids.push_back(pt.id);
    }
    std::sort(out.ids.begin(), out.ids.end());
    return out;
}

}  // namespace hsrnet
