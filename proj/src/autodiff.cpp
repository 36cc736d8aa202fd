#include "accident/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace accident {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::reset() { nodes_.clear(); }

void Tape::backward(Var root) {
  if (!root.valid()) throw std::invalid_argument("backward: invalid root");
  if (nodes_[root.id].value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
  }
  if (!nodes_[root.id].requires_grad) return;  // nothing upstream needs gradients
  nodes_[root.id].grad[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.back) n.back(*this);
  }
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  Var v = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr);
  int ia = a.id, ib = b.id, self = v.id;
  nodes_[self].back = [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Tensor& ga = t.grad_ref(ia);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Tensor& gb = t.grad_ref(ib);
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  };
  return v;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  Var v = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr);
  int ia = a.id, ib = b.id, self = v.id;
  nodes_[self].back = [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Tensor& ga = t.grad_ref(ia);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Tensor& gb = t.grad_ref(ib);
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  };
  return v;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  Var v = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr);
  int ia = a.id, ib = b.id, self = v.id;
  nodes_[self].back = [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    if (t.nodes_[ia].requires_grad) {
      Tensor& ga = t.grad_ref(ia);
      for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.nodes_[ib].requires_grad) {
      Tensor& gb = t.grad_ref(ib);
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  };
  return v;
}

Var Tape::cmul(Var a, Tensor c) {
  const Tensor& ta = val(a);
  if (!ta.same_shape(c)) throw std::invalid_argument("cmul: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, c = std::move(c)](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  };
  return v;
}

Var Tape::cadd(Var a, Tensor c) {
  const Tensor& ta = val(a);
  if (!ta.same_shape(c)) throw std::invalid_argument("cadd: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += c[i];
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return v;
}

Var Tape::scale(Var a, double c) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, c](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  };
  return v;
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += c;
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return v;
}

Var Tape::smul(Var s, Var x) {
  const Tensor& ts = val(s);
  if (ts.size() != 1) throw std::invalid_argument("smul: s must be scalar");
  const double sv = ts[0];
  Tensor out = val(x);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= sv;
  Var v = push(std::move(out), requires_grad(s) || requires_grad(x), nullptr);
  int is = s.id, ix = x.id, self = v.id;
  nodes_[self].back = [is, ix, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& vx = t.nodes_[ix].value;
    const double sv2 = t.nodes_[is].value[0];
    if (t.nodes_[is].requires_grad) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i] * vx[i];
      t.grad_ref(is)[0] += acc;
    }
    if (t.nodes_[ix].requires_grad) {
      Tensor& gx = t.grad_ref(ix);
      for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv2;
    }
  };
  return v;
}

Var Tape::add_rowvec(Var x, Var r) {
  const Tensor& tx = val(x);
  const Tensor& tr = val(r);
  if (tr.rows() != 1 || tr.cols() != tx.cols()) throw std::invalid_argument("add_rowvec: shape mismatch");
  Tensor out = tx;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += tr(0, j);
  Var v = push(std::move(out), requires_grad(x) || requires_grad(r), nullptr);
  int ix = x.id, ir = r.id, self = v.id;
  nodes_[self].back = [ix, ir, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[ix].requires_grad) {
      Tensor& gx = t.grad_ref(ix);
      for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.nodes_[ir].requires_grad) {
      Tensor& gr = t.grad_ref(ir);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    }
  };
  return v;
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = accident::matmul(val(a), val(b));
  Var v = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr);
  int ia = a.id, ib = b.id, self = v.id;
  nodes_[self].back = [ia, ib, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    const Tensor& vb = t.nodes_[ib].value;
    if (t.nodes_[ia].requires_grad) {
      // dA += G * B^T
      Tensor& ga = t.grad_ref(ia);
      const int m = va.rows(), k = va.cols(), n = vb.cols();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g.raw() + static_cast<std::size_t>(i) * n;
          const double* brow = vb.raw() + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga(i, p) += acc;
        }
    }
    if (t.nodes_[ib].requires_grad) {
      // dB += A^T * G
      Tensor& gb = t.grad_ref(ib);
      const int m = va.rows(), k = va.cols(), n = vb.cols();
      for (int i = 0; i < m; ++i) {
        const double* arow = va.raw() + static_cast<std::size_t>(i) * k;
        const double* grow = g.raw() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
          const double av = arow[p];
          if (av == 0.0) continue;
          double* gbrow = gb.raw() + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  };
  return v;
}

Var Tape::transpose(Var a) {
  Tensor out = accident::transpose(val(a));
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
  };
  return v;
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += va[i] > 0.0 ? g[i] : 0.0;
  };
  return v;
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return v;
}

Var Tape::tanh_(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return v;
}

Var Tape::exp_(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  };
  return v;
}

Var Tape::log_clamped(Var a, double clamp_min) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i] > clamp_min ? out[i] : clamp_min);
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, clamp_min](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (va[i] > clamp_min) ga[i] += g[i] / va[i];
  };
  return v;
}

Var Tape::softplus(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double x = out[i];
    out[i] = x > 30.0 ? x : std::log1p(std::exp(x));
  }
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[ia].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (1.0 + std::exp(-va[i]));
  };
  return v;
}

Var Tape::reciprocal(Var a) {
  Tensor out = val(a);
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / out[i];
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += -g[i] * y[i] * y[i];
  };
  return v;
}

Var Tape::softmax_rows(Var a) {
  Tensor out = val(a);
  for (int i = 0; i < out.rows(); ++i) {
    double mx = out(i, 0);
    for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out(i, j));
    double sum = 0.0;
    for (int j = 0; j < out.cols(); ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      sum += out(i, j);
    }
    for (int j = 0; j < out.cols(); ++j) out(i, j) /= sum;
  }
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_ref(ia);
    for (int i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (int j = 0; j < g.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  };
  return v;
}

Var Tape::rownorm_abs(Var a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  std::vector<double> sums(ta.rows(), 0.0);
  for (int i = 0; i < ta.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < ta.cols(); ++j) s += std::fabs(ta(i, j));
    sums[i] = s;
    if (s > 0.0)
      for (int j = 0; j < ta.cols(); ++j) out(i, j) /= s;
  }
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, sums = std::move(sums)](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.nodes_[ia].value;
    Tensor& ga = t.grad_ref(ia);
    for (int i = 0; i < g.rows(); ++i) {
      const double s = sums[i];
      if (s <= 0.0) {
        for (int j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j);
        continue;
      }
      double gx = 0.0;
      for (int j = 0; j < g.cols(); ++j) gx += g(i, j) * x(i, j);
      for (int j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) / s - sgn(x(i, j)) * gx / (s * s);
    }
  };
  return v;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(gain);
  const Tensor& tb = val(bias);
  const int n = tx.cols();
  if (tg.rows() != 1 || tg.cols() != n || tb.rows() != 1 || tb.cols() != n)
    throw std::invalid_argument("layer_norm_rows: gain/bias shape mismatch");
  Tensor out(tx.rows(), n);
  std::vector<double> mus(tx.rows()), istds(tx.rows());
  for (int i = 0; i < tx.rows(); ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += tx(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = tx(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double istd = 1.0 / std::sqrt(var + eps);
    mus[i] = mu;
    istds[i] = istd;
    for (int j = 0; j < n; ++j) out(i, j) = tg(0, j) * (tx(i, j) - mu) * istd + tb(0, j);
  }
  Var v = push(std::move(out), requires_grad(x) || requires_grad(gain) || requires_grad(bias), nullptr);
  int ix = x.id, ig = gain.id, ib = bias.id, self = v.id;
  nodes_[self].back = [ix, ig, ib, self, n, mus = std::move(mus), istds = std::move(istds)](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.nodes_[ix].value;
    const Tensor& gv = t.nodes_[ig].value;
    for (int i = 0; i < g.rows(); ++i) {
      const double mu = mus[i], istd = istds[i];
      if (t.nodes_[ig].requires_grad || t.nodes_[ib].requires_grad) {
        for (int j = 0; j < n; ++j) {
          const double xhat = (xv(i, j) - mu) * istd;
          if (t.nodes_[ig].requires_grad) t.grad_ref(ig)(0, j) += g(i, j) * xhat;
          if (t.nodes_[ib].requires_grad) t.grad_ref(ib)(0, j) += g(i, j);
        }
      }
      if (t.nodes_[ix].requires_grad) {
        // dxhat = g * gain; dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double dxh = g(i, j) * gv(0, j);
          const double xhat = (xv(i, j) - mu) * istd;
          m1 += dxh;
          m2 += dxh * xhat;
        }
        m1 /= n;
        m2 /= n;
        Tensor& gx = t.grad_ref(ix);
        for (int j = 0; j < n; ++j) {
          const double dxh = g(i, j) * gv(0, j);
          const double xhat = (xv(i, j) - mu) * istd;
          gx(i, j) += istd * (dxh - m1 - xhat * m2);
        }
      }
    }
  };
  return v;
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rows() != tb.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Tensor out(ta.rows(), ta.cols() + tb.cols());
  for (int i = 0; i < ta.rows(); ++i) {
    for (int j = 0; j < ta.cols(); ++j) out(i, j) = ta(i, j);
    for (int j = 0; j < tb.cols(); ++j) out(i, ta.cols() + j) = tb(i, j);
  }
  Var v = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr);
  int ia = a.id, ibv = b.id, self = v.id, ca = ta.cols();
  nodes_[self].back = [ia, ibv, self, ca](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[ia].requires_grad) {
      Tensor& ga = t.grad_ref(ia);
      for (int i = 0; i < ga.rows(); ++i)
        for (int j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, j);
    }
    if (t.nodes_[ibv].requires_grad) {
      Tensor& gb = t.grad_ref(ibv);
      for (int i = 0; i < gb.rows(); ++i)
        for (int j = 0; j < gb.cols(); ++j) gb(i, j) += g(i, ca + j);
    }
  };
  return v;
}

Var Tape::slice_cols(Var a, int from, int to) {
  const Tensor& ta = val(a);
  if (from < 0 || to > ta.cols() || from >= to) throw std::invalid_argument("slice_cols: bad range");
  Tensor out(ta.rows(), to - from);
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = from; j < to; ++j) out(i, j - from) = ta(i, j);
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, from](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga(i, from + j) += g(i, j);
  };
  return v;
}

Var Tape::slice_rows(Var a, int from, int to) {
  const Tensor& ta = val(a);
  if (from < 0 || to > ta.rows() || from >= to) throw std::invalid_argument("slice_rows: bad range");
  Tensor out(to - from, ta.cols());
  for (int i = from; i < to; ++i)
    for (int j = 0; j < ta.cols(); ++j) out(i - from, j) = ta(i, j);
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, from](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga(from + i, j) += g(i, j);
  };
  return v;
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
  const int n = val(rows[0]).cols();
  Tensor out(static_cast<int>(rows.size()), n);
  bool rg = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& r = val(rows[i]);
    if (r.rows() != 1 || r.cols() != n) throw std::invalid_argument("stack_rows: row shape mismatch");
    for (int j = 0; j < n; ++j) out(static_cast<int>(i), j) = r(0, j);
    rg = rg || requires_grad(rows[i]);
  }
  Var v = push(std::move(out), rg, nullptr);
  std::vector<int> ids(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ids[i] = rows[i].id;
  int self = v.id;
  nodes_[self].back = [ids = std::move(ids), self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.nodes_[ids[i]].requires_grad) continue;
      Tensor& gr = t.grad_ref(ids[i]);
      for (int j = 0; j < g.cols(); ++j) gr(0, j) += g(static_cast<int>(i), j);
    }
  };
  return v;
}

Var Tape::shift_rows(Var a, int s) {
  const Tensor& ta = val(a);
  if (s < 0) throw std::invalid_argument("shift_rows: negative shift");
  Tensor out(ta.rows(), ta.cols());
  for (int i = s; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) out(i, j) = ta(i - s, j);
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, s](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (int i = s; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga(i - s, j) += g(i, j);
  };
  return v;
}

Var Tape::masked_mean_rows(Var a, Tensor mask) {
  const Tensor& ta = val(a);
  if (mask.size() != ta.rows()) throw std::invalid_argument("masked_mean_rows: mask size mismatch");
  int cnt = 0;
  for (std::int64_t i = 0; i < mask.size(); ++i)
    if (mask[i] > 0.0) ++cnt;
  Tensor out(1, ta.cols());
  if (cnt > 0) {
    for (int i = 0; i < ta.rows(); ++i) {
      if (mask[i] <= 0.0) continue;
      for (int j = 0; j < ta.cols(); ++j) out(0, j) += ta(i, j);
    }
    for (int j = 0; j < ta.cols(); ++j) out(0, j) /= cnt;
  }
  Var v = push(std::move(out), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self, cnt, mask = std::move(mask)](Tape& t) {
    if (!t.nodes_[ia].requires_grad || cnt == 0) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(ia);
    for (int i = 0; i < ga.rows(); ++i) {
      if (mask[i] <= 0.0) continue;
      for (int j = 0; j < g.cols(); ++j) ga(i, j) += g(0, j) / cnt;
    }
  };
  return v;
}

Var Tape::sum_all(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < ta.size(); ++i) s += ta[i];
  Var v = push(Tensor::scalar(s), requires_grad(a), nullptr);
  int ia = a.id, self = v.id;
  nodes_[self].back = [ia, self](Tape& t) {
    if (!t.nodes_[ia].requires_grad) return;
    const double g = t.nodes_[self].grad[0];
    Tensor& ga = t.grad_ref(ia);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return v;
}

}  // namespace accident
