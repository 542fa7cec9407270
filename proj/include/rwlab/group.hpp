#pragma once

#include <absl/container/flat_hash_map.h>
#include <absl/container/inlined_vector.h>

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rwlab {

using Payload = absl::InlinedVector<int64_t, 4>;

// Canonical payload of a group element. Only meaningful together with the
// Group that produced it.
struct Element {
  Payload v;

  Element() = default;
  explicit Element(Payload p) : v(std::move(p)) {}
  Element(std::initializer_list<int64_t> il) : v(il) {}

  bool operator==(const Element& o) const { return v == o.v; }
  bool operator!=(const Element& o) const { return v != o.v; }
  bool operator<(const Element& o) const {
    return std::lexicographical_compare(v.begin(), v.end(), o.v.begin(), o.v.end());
  }
  template <typename H>
  friend H AbslHashValue(H h, const Element& e) {
    return H::combine_contiguous(std::move(h), e.v.data(), e.v.size());
  }
};

struct WordLength {
  int64_t length = 0;
  bool exact = true;  // false: certified upper bound only
};

struct Ball {
  int radius = 0;
  std::vector<Element> elements;  // sorted canonical order
  size_t volume() const { return elements.size(); }
};

class Group;
using GroupPtr = std::shared_ptr<const Group>;

class Group : public std::enable_shared_from_this<Group> {
 public:
  enum class Kind { Lattice, Cyclic, Heisenberg, Wreath };

  static constexpr size_t kDefaultBudget = 2'000'000;

  static GroupPtr lattice(int d);
  static GroupPtr cyclic(int64_t m);
  static GroupPtr heisenberg();
  static GroupPtr wreath(GroupPtr lamp, GroupPtr base);
  static GroupPtr parse(std::string_view descriptor);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  int64_t modulus() const { return modulus_; }
  const GroupPtr& lamp() const { return lamp_; }
  const GroupPtr& base() const { return base_; }
  const std::string& descriptor() const { return descriptor_; }

  bool same_as(const Group& o) const { return this == &o || descriptor_ == o.descriptor_; }
  bool is_finite() const;
  // Polynomial growth degree; 0 for finite groups, -1 for exponential growth.
  int growth_degree() const;

  Element identity() const;
  bool is_identity(const Element& g) const;
  Element multiply(const Element& a, const Element& b) const;
  Element inverse(const Element& a) const;
  Element canonicalize(const Element& a) const;
  bool valid(const Element& a) const;

  // Generating tuple (as given) and the symmetric set S* including e.
  const std::vector<Element>& generators() const { return gens_; }
  const std::vector<Element>& sstar() const { return sstar_; }

  std::string to_string(const Element& g) const;

  WordLength word_length(const Element& g) const;
  Ball ball(int r) const;
  size_t volume(int r) const;

  size_t budget() const { return budget_; }
  void set_budget(size_t b) const;

  // Wreath helpers.
  struct WreathParts {
    Element cursor;
    std::vector<std::pair<Element, Element>> lamps;  // (position, non-identity lamp), sorted
  };
  WreathParts split(const Element& g) const;
  Element join(WreathParts parts) const;  // canonicalizes
  Element embed_lamp(const Element& k) const;
  Element embed_base(const Element& h) const;

 private:
  Group() = default;
  void finish();
  void extend_cache(int r) const;  // caller holds mu_
  WordLength wreath_line_length(const Element& g) const;
  WordLength upper_bound_length(const Element& g) const;

  Kind kind_ = Kind::Lattice;
  int dim_ = 0;
  int64_t modulus_ = 0;
  GroupPtr lamp_, base_;
  std::string descriptor_;
  std::vector<Element> gens_;
  std::vector<Element> sstar_;

  mutable size_t budget_ = kDefaultBudget;
  mutable std::mutex mu_;
  mutable std::vector<std::vector<Element>> spheres_;
  mutable absl::flat_hash_map<Element, int> dist_;
  mutable size_t cached_total_ = 0;
  mutable bool saturated_ = false;  // finite group fully enumerated
  mutable bool exhausted_ = false;  // budget hit; lengths fall back to bounds
};

// Element bound to its group; multiply checks descriptor equality.
struct GroupElement {
  GroupPtr group;
  Element value;
};

GroupElement multiply(const GroupElement& a, const GroupElement& b);
GroupPtr wreath_group(GroupPtr lamp, GroupPtr base);

}  // namespace rwlab
