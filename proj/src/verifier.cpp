#include "certsynth/verifier.hpp"

#include <algorithm>
#include <bit>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace certsynth {

std::string to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::Certified: return "Certified";
    case VerdictKind::Falsified: return "Falsified";
    case VerdictKind::Unknown: return "Unknown";
    case VerdictKind::ResourceExhausted: return "ResourceExhausted";
  }
  return "Unknown";
}

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Candidate points depend only on the box and the seed, so the explored tree
// does not depend on the processing order.
std::uint64_t box_seed(const Box& b, std::uint64_t seed) {
  std::uint64_t h = splitmix(seed);
  for (const auto& iv : b) {
    h = splitmix(h ^ std::bit_cast<std::uint64_t>(iv.lo()));
    h = splitmix(h ^ std::bit_cast<std::uint64_t>(iv.hi()));
  }
  return h;
}

// Shrinks b to the hull of b minus the constraint-free excluded boxes that
// cover it in every dimension but one.
Box contract(const Region& r, Box b) {
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = intersect(b[i], r.set.base[i]);
  for (const auto& e : r.excluded) {
    if (!e.constraints.empty()) continue;
    Eigen::Index open = -1;
    int uncovered = 0;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (!b[i].subset_of(e.base[i])) {
        open = i;
        ++uncovered;
      }
    }
    if (uncovered != 1) continue;
    const Interval& bi = b[open];
    const Interval& ei = e.base[open];
    if (ei.lo() <= bi.lo() && ei.hi() >= bi.lo() && ei.hi() < bi.hi()) {
      b[open] = Interval(ei.hi(), bi.hi());
    } else if (ei.hi() >= bi.hi() && ei.lo() <= bi.hi() && ei.lo() > bi.lo()) {
      b[open] = Interval(bi.lo(), ei.lo());
    }
  }
  return b;
}

double relative_width(const Box& b, const Vector& ref) {
  double w = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    if (ref[i] > 0.0) w = std::max(w, b[i].width() / ref[i]);
  }
  return w;
}

Eigen::Index split_dimension(const Box& b, const Vector& ref) {
  Eigen::Index best = 0;
  double widest = -1.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double w = ref[i] > 0.0 ? b[i].width() / ref[i] : 0.0;
    if (w > widest) {
      widest = w;
      best = i;
    }
  }
  return best;
}

enum class Outcome { Discard, Certified, Falsified, Undecided, Split };

struct BoxResult {
  Outcome outcome = Outcome::Discard;
  Vector cex;
  double violation = 0.0;
  Box lower, upper;
  std::optional<Vector> member_mid;
  double width = 0.0;
};

class BranchAndBound {
 public:
  BranchAndBound(const VerificationCondition& vc, const VerifierConfig& config) : vc_(vc), config_(config) {
    ref_ = box_widths(vc.region.set.base);
  }

  BoxResult process(const Box& raw) const {
    BoxResult r;
    const BoxClass cls = classify_region_box(vc_.region, raw);
    if (cls == BoxClass::Outside) return r;
    const Box b = contract(vc_.region, raw);
    const NetView nets = vc_.nets();
    for (const auto& g : vc_.gates) {
      try {
        if (g.enclose(nets, b).lo() > 0.0) return r;
      } catch (const Error&) {
      }
    }

    Rng rng(box_seed(raw, config_.seed));
    const Vector mid = box_mid(b);
    for (int k = 0; k < config_.samples_per_box; ++k) {
      Vector x = mid;
      if (k > 0) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          x[i] = b[i].is_point() ? b[i].lo() : std::uniform_real_distribution<double>(b[i].lo(), b[i].hi())(rng);
        }
      }
      try {
        if (!vc_member(vc_, x)) continue;
        if (k == 0) r.member_mid = x;
        const double v = vc_.violation.value(nets, x);
        if (is_violating(vc_, v)) {
          r.outcome = Outcome::Falsified;
          r.cex = x;
          r.violation = v;
          return r;
        }
      } catch (const Error&) {
        // Point arithmetic failed at this candidate; the box stays open.
      }
    }

    try {
      const Interval enc = vc_.violation.enclose(nets, b);
      if (vc_.strict ? enc.hi() < 0.0 : enc.hi() <= 0.0) {
        r.outcome = Outcome::Certified;
        return r;
      }
    } catch (const Error&) {
      // Interval failure: never certified.
    }
    r.width = relative_width(raw, ref_);
    if (r.width < config_.w_min) {
      r.outcome = Outcome::Undecided;
      r.width = box_widths(raw).maxCoeff();
      return r;
    }
    r.outcome = Outcome::Split;
    std::tie(r.lower, r.upper) = bisect(raw, split_dimension(raw, ref_));
    return r;
  }

  Verdict run() const {
    Verdict verdict;
    verdict.vc_id = vc_.id;
    std::vector<Box> stack{vc_.region.set.base};
    std::mutex m;
    std::condition_variable cv;
    int active = 0;
    bool stop = false;
    bool exhausted = false;
    std::vector<std::pair<double, Vector>> undecided;  // (width, member midpoint or empty)
    double smallest = std::numeric_limits<double>::infinity();

    const auto work = [&]() {
      while (true) {
        Box b;
        {
          std::unique_lock lock(m);
          cv.wait(lock, [&] { return stop || !stack.empty() || active == 0; });
          if (stop || stack.empty()) {
            cv.notify_all();
            return;
          }
          if (verdict.boxes >= config_.max_boxes) {
            exhausted = stop = true;
            cv.notify_all();
            return;
          }
          b = std::move(stack.back());
          stack.pop_back();
          ++verdict.boxes;
          ++active;
        }
        BoxResult r = process(b);
        std::lock_guard lock(m);
        --active;
        switch (r.outcome) {
          case Outcome::Falsified:
            if (verdict.kind != VerdictKind::Falsified) {
              verdict.kind = VerdictKind::Falsified;
              verdict.cex = r.cex;
              verdict.violation = r.violation;
            }
            stop = true;
            break;
          case Outcome::Undecided:
            ++verdict.undecided;
            smallest = std::min(smallest, r.width);
            undecided.emplace_back(r.width, r.member_mid ? *r.member_mid : Vector());
            break;
          case Outcome::Split:
            stack.push_back(std::move(r.upper));
            stack.push_back(std::move(r.lower));
            break;
          default: break;
        }
        cv.notify_all();
      }
    };

    const int workers = std::max(1, config_.workers);
    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < workers; ++i) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }

    if (verdict.kind == VerdictKind::Falsified) return verdict;
    if (exhausted) {
      verdict.kind = VerdictKind::ResourceExhausted;
      return verdict;
    }
    if (verdict.undecided > 0) {
      verdict.kind = VerdictKind::Unknown;
      verdict.smallest_width = smallest;
      std::vector<Vector> pts;
      for (auto& u : undecided) {
        if (u.second.size() > 0) pts.push_back(std::move(u.second));
      }
      std::sort(pts.begin(), pts.end(), [](const Vector& a, const Vector& b) {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
      });
      if (static_cast<int>(pts.size()) > config_.max_undecided_points) {
        // Spread the kept points over the sorted list.
        std::vector<Vector> kept;
        const std::size_t n = pts.size();
        const std::size_t k = static_cast<std::size_t>(config_.max_undecided_points);
        for (std::size_t i = 0; i < k; ++i) kept.push_back(pts[i * n / k]);
        pts = std::move(kept);
      }
      verdict.undecided_points = std::move(pts);
      return verdict;
    }
    verdict.kind = VerdictKind::Certified;
    return verdict;
  }

 private:
  const VerificationCondition& vc_;
  const VerifierConfig& config_;
  Vector ref_;
};

}  // namespace

Verdict verify_vc(const VerificationCondition& vc, const VerifierConfig& config) {
  if (!(config.w_min > 0.0) || config.max_boxes < 1 || config.samples_per_box < 1) {
    throw Error(ErrorKind::PreconditionViolated, "verifier needs w_min > 0, max_boxes >= 1, samples >= 1");
  }
  return BranchAndBound(vc, config).run();
}

std::optional<Counterexample> falsify_random(const VerificationCondition& vc, int n, Rng& rng) {
  if (n < 1) throw Error(ErrorKind::PreconditionViolated, "falsify_random needs n >= 1");
  const NetView nets = vc.nets();
  for (const auto& x : sample_region(vc.region, n, rng)) {
    try {
      if (!gates_hold(vc, nets, x)) continue;
      const double v = vc.violation.value(nets, x);
      if (is_violating(vc, v)) return Counterexample{vc.id, x, v};
    } catch (const Error&) {
    }
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, Verdict>> verify_all(const std::vector<VerificationCondition>& vcs,
                                                        const VerifierConfig& config) {
  if (vcs.empty()) throw Error(ErrorKind::MalformedProblem, "no verification conditions to check");
  std::vector<std::pair<std::string, Verdict>> out;
  for (const auto& vc : vcs) out.emplace_back(vc.id, verify_vc(vc, config));
  return out;
}

bool all_certified(const std::vector<std::pair<std::string, Verdict>>& verdicts) {
  return !verdicts.empty() &&
         std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.second.certified(); });
}

}  // namespace certsynth
