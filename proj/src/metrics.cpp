#include "ssecam/metrics.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ssecam {
namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

// Correctly rounded (nearest, ties to even) value of num/den for num >= 0, den > 0.
double to_double(const cpp_rational& r) {
  cpp_int num = boost::multiprecision::numerator(r);
  const cpp_int den = boost::multiprecision::denominator(r);
  if (num == 0) return 0.0;
  if (num < 0) throw std::logic_error("to_double: negative ratio");
  const long bits = static_cast<long>(boost::multiprecision::msb(num)) -
                    static_cast<long>(boost::multiprecision::msb(den));
  // Scale so the integer quotient carries 54 or 55 significant bits.
  const long shift = 54 - bits;
  cpp_int q, rem;
  if (shift >= 0) {
    divide_qr(cpp_int(num << static_cast<unsigned>(shift)), den, q, rem);
  } else {
    divide_qr(num, cpp_int(den << static_cast<unsigned>(-shift)), q, rem);
  }
  const unsigned extra = static_cast<unsigned>(boost::multiprecision::msb(q)) + 1 - 53;
  const cpp_int low = q & ((cpp_int(1) << extra) - 1);
  const cpp_int half = cpp_int(1) << (extra - 1);
  q >>= extra;
  if (low > half || (low == half && (rem != 0 || (q & 1) != 0))) q += 1;
  return std::ldexp(q.convert_to<double>(), static_cast<int>(extra) - static_cast<int>(shift));
}

template <typename Ratio>
ClassMean class_mean(int first, int last, Ratio ratio, const char* what) {
  ClassMean out;
  cpp_rational total = 0;
  for (int c = first; c < last; ++c) {
    std::uint64_t num = 0, den = 0;
    if (!ratio(c, num, den)) {
      out.skipped.push_back(c);
      continue;
    }
    total += cpp_rational(cpp_int(num), cpp_int(den));
    out.included.push_back(c);
  }
  if (out.included.empty()) throw std::domain_error(std::string(what) + ": no eligible class");
  out.value = to_double(total / static_cast<long>(out.included.size()));
  return out;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.num_classes() != num_classes()) {
    throw std::invalid_argument("ConfusionCounts: class count mismatch");
  }
  for (int c = 0; c < num_classes(); ++c) {
    tp[c] += other.tp[c];
    fn[c] += other.fn[c];
    fp[c] += other.fp[c];
  }
  return *this;
}

void accumulate_confusion(const LabelMap& pred, const LabelMap& gt, ConfusionCounts& counts) {
  if (pred.height != gt.height || pred.width != gt.width ||
      pred.labels.size() != gt.labels.size()) {
    throw std::invalid_argument("accumulate_confusion: prediction and ground truth differ in size");
  }
  const int classes = counts.num_classes();
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i];
    const int p = pred.labels[i];
    if (g >= classes || p >= classes) {
      throw std::out_of_range("accumulate_confusion: class index " + std::to_string(std::max(g, p)) +
                              " >= " + std::to_string(classes));
    }
    if (g == p) {
      ++counts.tp[g];
    } else {
      ++counts.fn[g];
      ++counts.fp[p];
    }
  }
}

ClassMean miou(const ConfusionCounts& counts) {
  return class_mean(0, counts.num_classes(),
                    [&](int c, std::uint64_t& num, std::uint64_t& den) {
                      num = counts.tp[c];
                      den = counts.tp[c] + counts.fn[c] + counts.fp[c];
                      return den > 0;
                    },
                    "miou");
}

ClassMean m_fn(const ConfusionCounts& counts) {
  return class_mean(1, counts.num_classes(),
                    [&](int c, std::uint64_t& num, std::uint64_t& den) {
                      num = counts.fn[c];
                      den = counts.tp[c];
                      return den > 0;
                    },
                    "m_fn");
}

ClassMean m_fp(const ConfusionCounts& counts) {
  return class_mean(1, counts.num_classes(),
                    [&](int c, std::uint64_t& num, std::uint64_t& den) {
                      num = counts.fp[c];
                      den = counts.tp[c];
                      return den > 0;
                    },
                    "m_fp");
}

MetricsReport make_report(const ConfusionCounts& counts) {
  MetricsReport report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.miou = miou(counts).value;
  for (int c = 0; c < counts.num_classes(); ++c) {
    const std::uint64_t den = counts.tp[c] + counts.fn[c] + counts.fp[c];
    report.per_class_iou.push_back(
        den == 0 ? nan : to_double(cpp_rational(cpp_int(counts.tp[c]), cpp_int(den))));
  }
  try {
    const ClassMean fn = m_fn(counts);
    report.m_fn = fn.value;
    report.m_fp = m_fp(counts).value;
    report.skipped_classes = fn.skipped;
  } catch (const std::domain_error&) {
    report.m_fn = nan;
    report.m_fp = nan;
    for (int c = 1; c < counts.num_classes(); ++c) report.skipped_classes.push_back(c);
  }
  return report;
}

}  // namespace ssecam
