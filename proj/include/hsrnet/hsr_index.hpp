#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "hsrnet/net.hpp"

namespace hsrnet {

// Point (w_r || b_r) in R^D, D = d+1, carrying its neuron id.
struct LiftedPoint {
    int id = 0;
    std::vector<double> p;
};

struct DuplicateIdError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct MissingIdError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class SplitRule { WidestCoordinate, RandomHyperplane };

struct HsrConfig {
    int leaf_size = 32;           // B: max bucket size at build time
    double rebuild_ratio = 0.25;  // rebuild when (tombstones+inserted)/live exceeds this
    int overflow_factor = 2;      // rebuild a leaf when it holds more than overflow_factor*B entries
    SplitRule split = SplitRule::WidestCoordinate;
    std::uint64_t seed = 0;       // consumed only by the random-hyperplane rule
};

struct QueryStats {
    long long nodes_visited = 0;   // every node touched, including bulk-report collection
    long long leaves_visited = 0;
    long long pruned_subtrees = 0;
    long long bulk_subtrees = 0;
    long long point_tests = 0;     // per-point predicate evaluations in leaves
    long long reported = 0;
};

struct TreeStats {
    long long nodes = 0;
    long long leaves = 0;
    int max_depth = 0;
    long long live = 0;
    long long tombstones = 0;
};

// Exact dynamic half-space reporting: query(q, tau) returns precisely
// { id : <q, p_id> > tau } over live points. A ball-tree-style partition
// (median split on the widest-spread coordinate, lower median, ties by id)
// provides branch-and-bound pruning; every node keeps a bounding ball and a
// bounding box, and a subtree is skipped or bulk-reported only when the
// half-space bound clears tau by a small safety margin, so the reported set
// always equals the brute-force scan bit for bit.
//
// Updates: remove() tombstones, insert() descends to the nearest-center leaf
// inflating bounds on the way (reusing a tombstoned slot in the target leaf
// when one exists); a subtree is rebuilt from its live points when
// (tombstones + inserted)/live > rebuild_ratio or a leaf bucket overflows
// overflow_factor * leaf_size. update() moves a live point in place when the
// new position stays inside every enclosing bound, so small displacements
// cost a root-to-leaf containment walk and no debt; larger ones relocate the
// point below its lowest still-containing ancestor, leaving the levels above
// untouched.
class HsrIndex {
public:
    explicit HsrIndex(int dim, HsrConfig cfg = {});
    static HsrIndex build(int dim, const std::vector<LiftedPoint>& points, HsrConfig cfg = {});

    HsrIndex(HsrIndex&&) noexcept = default;
    HsrIndex& operator=(HsrIndex&&) noexcept = default;
    ~HsrIndex() = default;

    void insert(const LiftedPoint& point);  // DuplicateIdError if id is live
    void insert(int id, const double* p);   // p must hold dim() coordinates
    void remove(int id);                    // MissingIdError if id is not live
    void update(int id, const double* p);   // move a live point; MissingIdError if not live

    ActiveSet query(const std::vector<double>& q, double tau, QueryStats* stats = nullptr) const;

    std::size_t size() const { return live_; }
    int dim() const { return dim_; }

    // Upper bound on the norm of every stored point: root center norm plus
    // root radius, padded for the rounding in both. 0 when empty.
    double norm_bound() const;

    TreeStats tree_stats() const;
    // Debug traversal: verifies bounding-volume containment (1e-12 relative
    // slack), live/tombstone counters, arena linkage, and id-map consistency.
    // Throws std::logic_error on violation.
    void check_invariants() const;

private:
    // Nodes live in one flat arena and reference each other by index, so a
    // traversal streams through contiguous memory instead of chasing heap
    // pointers. Geometry sits in a parallel flat array of 3*dim+2 doubles per
    // node, laid out (center | radius | ||center|| | box_lo | box_hi) so the
    // ball test, the common case, reads one contiguous run.
    struct NodeRec {
        std::int32_t left = -1;    // arena index; -1 on leaves
        std::int32_t right = -1;
        std::int32_t parent = -1;  // -1 at the root
        std::int32_t leaf = -1;    // payload index; -1 on internal nodes
        std::int32_t live = 0;     // live points in subtree
        std::int32_t tomb = 0;     // tombstoned entries still stored in subtree
        std::int32_t inserted = 0; // inserts since this subtree was (re)built
    };
    struct Entry {
        int id;
        bool alive;
    };
    // Leaf payload. Alive entries occupy the prefix [0, live), tombstones the
    // suffix. Coordinates live in the shared pool_, column-major (coordinate j
    // spans pool_[off+j*cap .. off+(j+1)*cap)) so the per-point predicate scan
    // vectorizes; a full rebuild lays regions out in traversal order, so a
    // query streams the pool near-sequentially.
    struct LeafRec {
        std::vector<Entry> entries;
        std::size_t off = 0;   // start of this leaf's region in pool_
        std::int32_t cap = 0;  // point slots per coordinate column
    };
    struct BuildItem {
        int id;
        const double* p;
        double key;
    };

    // g[0..dim) center, g[dim] radius, g[dim+1] center norm,
    // g[dim+2..2*dim+2) box_lo, g[2*dim+2..3*dim+2) box_hi.
    double* geom(std::int32_t node) {
        return geom_.data() + static_cast<std::size_t>(node) * (3 * dim_ + 2);
    }
    const double* geom(std::int32_t node) const {
        return geom_.data() + static_cast<std::size_t>(node) * (3 * dim_ + 2);
    }
    // Internal nodes mirror both children's (center | radius | ||center||)
    // runs side by side, dim+2 doubles each, so the descent prunes a child
    // from one contiguous read without touching the child's own records.
    // Kept in sync by build_rec, the insert path, and subtree rebuilds.
    double* cball(std::int32_t node) {
        return cball_.data() + static_cast<std::size_t>(node) * 2 * (dim_ + 2);
    }
    const double* cball(std::int32_t node) const {
        return cball_.data() + static_cast<std::size_t>(node) * 2 * (dim_ + 2);
    }
    std::int32_t alloc_node();
    std::int32_t alloc_leaf();
    // Appends a fresh region to pool_; stale regions are reclaimed only by a
    // full rebuild, which the debt policy triggers before they can pile up.
    std::size_t pool_alloc(std::size_t count);
    double* leaf_cols(const LeafRec& leaf) { return pool_.data() + leaf.off; }
    const double* leaf_cols(const LeafRec& leaf) const { return pool_.data() + leaf.off; }
    std::int32_t build_rec(std::vector<BuildItem>& items, std::size_t lo, std::size_t hi,
                           std::int32_t parent);
    void rebuild_subtree(std::int32_t node);
    // Leaf bookkeeping shared by remove/insert/update: swap-tombstone an entry
    // out of the alive prefix; append one at the prefix end (returns whether a
    // tombstone slot was overwritten).
    void detach_leaf_entry(std::int32_t node, int id);
    bool append_leaf_entry(std::int32_t node, int id, const double* p);
    void query_walk(std::int32_t node, const double* q, double qnorm, double tau,
                    std::vector<int>& out, QueryStats* stats) const;
    void collect_live(std::int32_t node, std::vector<int>& out, QueryStats* stats) const;

    // id -> leaf-node map: a dense slot window for compact id ranges (the
    // common case; ids are neuron indices) with a hash-map fallback.
    std::int32_t leaf_lookup(int id) const;
    void leaf_assign(int id, std::int32_t node);
    void leaf_erase(int id);
    bool adopt_into_window(int id);

    int dim_ = 0;
    HsrConfig cfg_;
    std::size_t live_ = 0;
    std::uint64_t split_rng_state_ = 0;

    std::int32_t root_ = -1;
    std::vector<NodeRec> nodes_;
    std::vector<double> geom_;
    std::vector<double> cball_;  // nodes_.size() * 2 * (dim + 2)
    std::vector<LeafRec> leaves_;
    std::vector<double> pool_;  // all leaf coordinate regions, traversal order
    std::vector<std::int32_t> free_nodes_, free_leaves_;

    std::vector<std::int32_t> slot_;  // covers ids [slot_base_, slot_base_ + slot_.size())
    long long slot_base_ = 0;
    std::unordered_map<int, std::int32_t> overflow_;  // live ids outside the window

    // Rebuild scratch, reused so steady-state rebuilds do not allocate.
    std::vector<int> scratch_ids_;
    std::vector<double> scratch_coords_;
    std::vector<BuildItem> scratch_items_;
    std::vector<std::int32_t> scratch_stack_;
};

// Linear-scan oracle: exact, sorted ascending by id.
ActiveSet brute_force_query(const std::vector<LiftedPoint>& points, const std::vector<double>& q,
                            double tau);

}  // namespace hsrnet
