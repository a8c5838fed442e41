#include <algorithm>
#include <cmath>

#include "ropdf/error.hpp"
#include "ropdf/estimators.hpp"

namespace ropdf {

Mask active_mask(const GridFunction1D& pdf, double eps) {
    if (pdf.kind != FieldKind::pdf) throw InvalidArgument("active_mask: field is not a pdf");
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("active_mask: eps must lie in (0, 1)");
    const std::size_t n = pdf.size();
    Mask mask(n, false);
    if (n == 0) return mask;
    const double peak = *std::max_element(pdf.values.begin(), pdf.values.end());
    if (!(peak > 0.0)) return mask;
    const double threshold = eps * peak;
    std::size_t best_begin = 0, best_len = 0;
    for (std::size_t i = 0; i < n;) {
        if (!(pdf.values[i] >= threshold)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && pdf.values[j] >= threshold) ++j;
        if (j - i > best_len) {
            best_begin = i;
            best_len = j - i;
        }
        i = j;
    }
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(best_begin), best_len, true);
    return mask;
}

}  // namespace ropdf
