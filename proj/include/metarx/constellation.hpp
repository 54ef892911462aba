#pragma once

#include <complex>
#include <vector>

namespace metarx {

enum class ConstellationKind { Qam16, Pam4 };

// Unit-energy symbol alphabets. QAM-16 points are (1/sqrt(10))({±1,±3}+j{±1,±3});
// PAM-4 points are (1/sqrt(5)){-3,-1,+1,+3}.
class Constellation {
  public:
    static Constellation qam16();
    static Constellation pam4();

    ConstellationKind kind() const { return kind_; }
    int size() const { return static_cast<int>(points_.size()); }
    std::complex<double> point(int idx) const { return points_[idx]; }
    const std::vector<std::complex<double>>& points() const { return points_; }

    // real symbol value for PAM (imaginary part is zero by construction)
    double amplitude(int idx) const { return points_[idx].real(); }

    double average_energy() const;

  private:
    Constellation(ConstellationKind k, std::vector<std::complex<double>> pts)
        : kind_(k), points_(std::move(pts)) {}

    ConstellationKind kind_;
    std::vector<std::complex<double>> points_;
};

}  // namespace metarx
