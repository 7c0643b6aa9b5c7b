#include "gridsight/nms.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gridsight/errors.hpp"

namespace gridsight {

namespace {

// One round of the rule for the already-sorted index pool of a single class.
// Appends to `out`; `order` carries the global emission counter.
void suppress_class(const std::vector<Detection>& dets,
                    std::vector<std::size_t> pool, const NmsConfig& cfg,
                    std::vector<Detection>& out) {
  while (!pool.empty()) {
    const std::size_t u = pool.front();
    pool.erase(pool.begin());
    out.push_back(dets[u]);
    const double su = dets[u].score;

    std::vector<std::size_t> next;
    for (std::size_t i : pool) {
      if (iou(dets[u].box, dets[i].box, IouVariant::Union) <=
          cfg.iou_suppress) {
        next.push_back(i);
        continue;
      }
      const bool encloses = contains(dets[i].box, dets[u].box);
      const bool identical = encloses && contains(dets[u].box, dets[i].box);
      const double ratio = su > 0.0 ? (su - dets[i].score) / su : 0.0;
      if (encloses && !identical && ratio < cfg.lambda_containment) {
        // Rescued: emitted at the unified score, inert from here on.
        Detection kept = dets[i];
        kept.score = su;
        out.push_back(kept);
      }
      // Either way the box leaves the pool.
    }
    pool = std::move(next);
  }
}

}  // namespace

std::vector<Detection> nms_scale_synthesis(std::vector<Detection> dets,
                                           const NmsConfig& cfg) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    by_class[dets[i].class_id].push_back(i);
  }

  std::vector<Detection> out;
  out.reserve(dets.size());
  for (auto& [cls, pool] : by_class) {
    std::stable_sort(pool.begin(), pool.end(),
                     [&](std::size_t a, std::size_t b) {
                       return dets[a].score > dets[b].score;
                     });
    suppress_class(dets, std::move(pool), cfg, out);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return out;
}

std::vector<Detection> nms_reference_oracle(std::vector<Detection> dets,
                                            const NmsConfig& cfg) {
  // Deliberately naive transcription of the rule with its own box math.
  auto overlap_ratio = [](const Detection& p, const Detection& q) {
    const double pl = p.box.cx - p.box.w / 2.0, pr = p.box.cx + p.box.w / 2.0;
    const double pt = p.box.cy - p.box.h / 2.0, pb = p.box.cy + p.box.h / 2.0;
    const double ql = q.box.cx - q.box.w / 2.0, qr = q.box.cx + q.box.w / 2.0;
    const double qt = q.box.cy - q.box.h / 2.0, qb = q.box.cy + q.box.h / 2.0;
    const double iw = (pr < qr ? pr : qr) - (pl > ql ? pl : ql);
    const double ih = (pb < qb ? pb : qb) - (pt > qt ? pt : qt);
    double inter = 0.0;
    if (iw > 0.0 && ih > 0.0) inter = iw * ih;
    const double uni = p.box.w * p.box.h + q.box.w * q.box.h - inter;
    return inter / uni;
  };
  auto encloses = [](const Detection& big, const Detection& small) {
    const double bl = big.box.cx - big.box.w / 2.0;
    const double br = big.box.cx + big.box.w / 2.0;
    const double bt = big.box.cy - big.box.h / 2.0;
    const double bb = big.box.cy + big.box.h / 2.0;
    const double sl = small.box.cx - small.box.w / 2.0;
    const double sr = small.box.cx + small.box.w / 2.0;
    const double st = small.box.cy - small.box.h / 2.0;
    const double sb = small.box.cy + small.box.h / 2.0;
    return sl >= bl && sr <= br && st >= bt && sb <= bb;
  };

  std::vector<Detection> out;
  for (int cls = 0; cls < kClasses; ++cls) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].class_id == cls) pool.push_back(i);
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [&](std::size_t a, std::size_t b) {
                       return dets[a].score > dets[b].score;
                     });
    while (!pool.empty()) {
      const std::size_t u = pool[0];
      pool.erase(pool.begin());
      out.push_back(dets[u]);
      std::vector<std::size_t> survivors;
      for (std::size_t k = 0; k < pool.size(); ++k) {
        const std::size_t i = pool[k];
        if (overlap_ratio(dets[u], dets[i]) > cfg.iou_suppress) {
          const bool big = encloses(dets[i], dets[u]);
          const bool same = big && encloses(dets[u], dets[i]);
          double ratio = 0.0;
          if (dets[u].score > 0.0) {
            ratio = (dets[u].score - dets[i].score) / dets[u].score;
          }
          if (big && !same && ratio < cfg.lambda_containment) {
            Detection rescued = dets[i];
            rescued.score = dets[u].score;
            out.push_back(rescued);
          }
        } else {
          survivors.push_back(i);
        }
      }
      pool = survivors;
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  return out;
}

std::vector<std::size_t> competitive_filter(std::span<const ScoredBox> slots,
                                            double iou_threshold) {
  for (const auto& s : slots) {
    if (!std::isfinite(s.fitness)) {
      throw DataError("competitive_filter: non-finite fitness");
    }
  }
  std::vector<std::size_t> order(slots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (slots[a].fitness != slots[b].fitness) {
      return slots[a].fitness > slots[b].fitness;
    }
    return a < b;
  });

  std::vector<std::size_t> survivors;
  for (std::size_t i : order) {
    bool beaten = false;
    for (std::size_t s : survivors) {
      if (iou(slots[i].box, slots[s].box, IouVariant::Union) > iou_threshold) {
        beaten = true;
        break;
      }
    }
    if (!beaten) survivors.push_back(i);
  }
  std::sort(survivors.begin(), survivors.end());
  return survivors;
}

}  // namespace gridsight
