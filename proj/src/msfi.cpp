#include "cofinet/msfi.hpp"

#include "cofinet/error.hpp"

namespace cofi {
namespace {

template <typename T>
void require_half(const Tensor<T>& fine, const Tensor<T>& coarse, const char* pair) {
  const Shape a = fine.shape();
  const Shape b = coarse.shape();
  if (a.n != b.n || a.h != 2 * b.h || a.w != 2 * b.w) {
    throw DimensionError(std::string("msfi: level pair ") + pair + " breaks the 2× stride relation (" +
                         a.str() + " vs " + b.str() + ")");
  }
}

template <typename T>
Tensor<T> aligned(const std::optional<Conv2d<T>>& aligner, const Tensor<T>& x) {
  return aligner ? (*aligner)(x) : x;
}

template <typename T>
std::optional<Conv2d<T>> make_aligner(ParamStore<T>& store, const std::string& name, int from, int to) {
  if (from == to) return std::nullopt;
  return Conv2d<T>(store, name, from, to, 1);
}

}  // namespace

template <typename T>
Msfi<T>::Msfi(ParamStore<T>& store, const std::string& prefix, const std::array<int, 3>& widths,
              bool multiplicative)
    : multiplicative_(multiplicative) {
  const auto [c2, c3, c4] = widths;
  if (multiplicative) {
    align_f3_to_f4 = make_aligner(store, prefix + ".align34", c3, c4);
    align_f2_to_f3 = make_aligner(store, prefix + ".align23", c2, c3);
    align_f4_to_f3 = make_aligner(store, prefix + ".align43", c4, c3);
    align_f3_to_f2 = make_aligner(store, prefix + ".align32", c3, c2);
  } else {
    plain[0] = Conv2d<T>(store, prefix + ".plain2", c2, c2, 1);
    plain[1] = Conv2d<T>(store, prefix + ".plain3", c3, c3, 1);
    plain[2] = Conv2d<T>(store, prefix + ".plain4", c4, c4, 1);
  }
  const ConvGeometry same = Conv2d<T>::same(3);
  proj4 = Conv2d<T>(store, prefix + ".proj4", c4 + c3, c4, 3, same);
  proj3 = Conv2d<T>(store, prefix + ".proj3", c3 + c2 + c4, c3, 3, same);
  proj2 = Conv2d<T>(store, prefix + ".proj2", c2 + c3, c2, 3, same);
}

template <typename T>
FusedFeatures<T> Msfi<T>::operator()(const Tensor<T>& f2, const Tensor<T>& f3,
                                     const Tensor<T>& f4) const {
  require_half(f2, f3, "f2/f3");
  require_half(f3, f4, "f3/f4");
  constexpr auto kUp = ResizeDir::kUp;
  constexpr auto kDown = ResizeDir::kDown;

  FusedFeatures<T> out;
  if (multiplicative_) {
    out.f4p = mul(f4, aligned(align_f3_to_f4, resize2(f3, kDown)));
    out.f3p = mul(mul(f3, aligned(align_f2_to_f3, resize2(f2, kDown))),
                  aligned(align_f4_to_f3, resize2(out.f4p, kUp)));
    out.f2p = mul(f2, aligned(align_f3_to_f2, resize2(out.f3p, kUp)));
  } else {
    out.f2p = plain[0](f2);
    out.f3p = plain[1](f3);
    out.f4p = plain[2](f4);
  }

  out.f4pp = activation(proj4(concat_channels<T>({out.f4p, resize2(out.f3p, kDown)})), Act::kGelu);
  out.f3pp = activation(
      proj3(concat_channels<T>({out.f3p, resize2(out.f2p, kDown), resize2(out.f4pp, kUp)})),
      Act::kGelu);
  out.f2pp = activation(proj2(concat_channels<T>({out.f2p, resize2(out.f3pp, kUp)})), Act::kGelu);
  return out;
}

template <typename T>
SkipProjector<T>::SkipProjector(ParamStore<T>& store, const std::string& prefix,
                                const std::array<int, 4>& w) {
  proj4 = Conv2d<T>(store, prefix + ".proj4", 2 * w[3], w[3], 1);
  proj3 = Conv2d<T>(store, prefix + ".proj3", 2 * w[2] + w[3], w[2], 1);
  proj2 = Conv2d<T>(store, prefix + ".proj2", 2 * w[1] + w[2], w[1], 1);
}

template <typename T>
SkipStack<T> SkipProjector<T>::operator()(const PyramidFeatures<T>& p,
                                          const FusedFeatures<T>& fused) const {
  auto check = [](const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    const Shape x = a.shape();
    const Shape y = b.shape();
    if (x.n != y.n || x.h != y.h || x.w != y.w) {
      throw DimensionError(std::string("skip_stack: ") + what + " spatial mismatch (" + x.str() +
                           " vs " + y.str() + ")");
    }
  };
  check(fused.f4pp, p.f4, "f4''/f4");
  check(fused.f3pp, p.f3, "f3''/f3");
  check(fused.f2pp, p.f2, "f2''/f2");

  SkipStack<T> s;
  s.z4_cat = concat_channels<T>({fused.f4pp, p.f4});
  s.z4 = proj4(s.z4_cat);
  s.z3_cat = concat_channels<T>({fused.f3pp, p.f3, resize2(s.z4, ResizeDir::kUp)});
  s.z3 = proj3(s.z3_cat);
  s.z2_cat = concat_channels<T>({fused.f2pp, p.f2, resize2(s.z3, ResizeDir::kUp)});
  s.z2 = proj2(s.z2_cat);
  s.z1 = p.f1;
  return s;
}

template class Msfi<float>;
template class Msfi<double>;
template class SkipProjector<float>;
template class SkipProjector<double>;

}  // namespace cofi
