#include "truncllt/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "truncllt/decomp.hpp"
#include "truncllt/model.hpp"
#include "truncllt/rng.hpp"

namespace truncllt {

struct Expr::Node {
    enum class Op { Const, Coord, Add, Sub, Mul, Div, Neg, Sin, Cos, Tanh, Exp } op;
    double value = 0.0;
    std::size_t coord = 0;
    std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

class Parser {
public:
    Parser(const std::string& s, std::size_t d) : s_(s), d_(d) {}

    NodePtr parse() {
        NodePtr e = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
        return e;
    }

private:
    NodePtr expr() {
        NodePtr lhs = term();
        while (true) {
            skip_ws();
            if (peek() == '+' || peek() == '-') {
                const char c = s_[pos_++];
                NodePtr rhs = term();
                lhs = make(c == '+' ? Expr::Node::Op::Add : Expr::Node::Op::Sub, lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        NodePtr lhs = factor();
        while (true) {
            skip_ws();
            if (peek() == '*' || peek() == '/') {
                const char c = s_[pos_++];
                NodePtr rhs = factor();
                lhs = make(c == '*' ? Expr::Node::Op::Mul : Expr::Node::Op::Div, lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor() {
        skip_ws();
        if (peek() == '-') {
            ++pos_;
            return make(Expr::Node::Op::Neg, factor(), nullptr);
        }
        return primary();
    }

    NodePtr primary() {
        skip_ws();
        const char c = peek();
        if (c == '(') {
            ++pos_;
            NodePtr e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return ident();
        fail("expected a number, coordinate, function or '('");
        return nullptr;
    }

    NodePtr number() {
        const char* start = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(start, &end);
        if (end == start) fail("bad number");
        pos_ += static_cast<std::size_t>(end - start);
        auto n = std::make_shared<Expr::Node>();
        n->op = Expr::Node::Op::Const;
        n->value = v;
        return n;
    }

    NodePtr ident() {
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        const std::string name = s_.substr(start, pos_ - start);
        if (name.size() >= 2 && name[0] == 'x') {
            const long k = std::strtol(name.c_str() + 1, nullptr, 10);
            if (k < 1 || static_cast<std::size_t>(k) > d_)
                fail("coordinate " + name + " out of range for dimension " +
                     std::to_string(d_));
            auto n = std::make_shared<Expr::Node>();
            n->op = Expr::Node::Op::Coord;
            n->coord = static_cast<std::size_t>(k - 1);
            return n;
        }
        Expr::Node::Op op;
        if (name == "sin")
            op = Expr::Node::Op::Sin;
        else if (name == "cos")
            op = Expr::Node::Op::Cos;
        else if (name == "tanh")
            op = Expr::Node::Op::Tanh;
        else if (name == "exp")
            op = Expr::Node::Op::Exp;
        else {
            fail("unknown identifier '" + name + "'");
            return nullptr;
        }
        expect('(');
        NodePtr arg = expr();
        expect(')');
        return make(op, arg, nullptr);
    }

    NodePtr make(Expr::Node::Op op, NodePtr l, NodePtr r) {
        auto n = std::make_shared<Expr::Node>();
        n->op = op;
        n->lhs = std::move(l);
        n->rhs = std::move(r);
        return n;
    }

    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ExprError("expression error at position " + std::to_string(pos_) + ": " + msg +
                        " in \"" + s_ + "\"");
    }

    const std::string& s_;
    std::size_t d_;
    std::size_t pos_ = 0;
};

double eval_node(const Expr::Node& n, const Vec& x) {
    using Op = Expr::Node::Op;
    switch (n.op) {
        case Op::Const: return n.value;
        case Op::Coord: return x[n.coord];
        case Op::Add: return eval_node(*n.lhs, x) + eval_node(*n.rhs, x);
        case Op::Sub: return eval_node(*n.lhs, x) - eval_node(*n.rhs, x);
        case Op::Mul: return eval_node(*n.lhs, x) * eval_node(*n.rhs, x);
        case Op::Div: return eval_node(*n.lhs, x) / eval_node(*n.rhs, x);
        case Op::Neg: return -eval_node(*n.lhs, x);
        case Op::Sin: return std::sin(eval_node(*n.lhs, x));
        case Op::Cos: return std::cos(eval_node(*n.lhs, x));
        case Op::Tanh: return std::tanh(eval_node(*n.lhs, x));
        case Op::Exp: return std::exp(eval_node(*n.lhs, x));
    }
    throw ExprError("corrupt expression node");
}

}  // namespace

Expr Expr::parse(const std::string& text, std::size_t d) {
    Expr e;
    Parser p(text, d);
    e.root_ = p.parse();
    return e;
}

double Expr::eval(const Vec& x) const {
    if (!root_) throw ExprError("empty expression");
    return eval_node(*root_, x);
}

ModelSpec model_from_expressions(std::size_t d, const std::vector<std::string>& a_exprs,
                                 const std::vector<std::string>& b_exprs, double gamma) {
    if (a_exprs.size() != d || b_exprs.size() != d * d)
        throw ContractViolation("model_from_expressions: need d drift and d*d diffusion entries");
    std::vector<Expr> ae, be;
    ae.reserve(d);
    be.reserve(d * d);
    for (const auto& s : a_exprs) ae.push_back(Expr::parse(s, d));
    for (const auto& s : b_exprs) be.push_back(Expr::parse(s, d));

    ModelSpec spec;
    spec.d = d;
    spec.gamma = gamma;
    spec.a = [ae, d](const Vec& x) {
        Vec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = ae[i].eval(x);
        return v;
    };
    spec.b = [be, d](const Vec& x) {
        Mat m(d * d);
        for (std::size_t i = 0; i < d * d; ++i) m[i] = be[i].eval(x);
        return m;
    };
    // Nested central-difference derivatives. Steps widen with the order so
    // each level stays well-conditioned; the accuracy loss is the documented
    // price of expression-defined coefficients.
    const double h1 = 1e-5, h2 = 1e-4, h3 = 1e-3;
    auto fd1 = [d](const std::function<double(const Vec&)>& f, const Vec& x, std::size_t j,
                   double h) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        return (f(xp) - f(xm)) / (2.0 * h);
    };
    auto a_of = [ae](std::size_t i) {
        return [ae, i](const Vec& x) { return ae[i].eval(x); };
    };
    auto b_of = [be, d](std::size_t i, std::size_t r) {
        return [be, i, r, d](const Vec& x) { return be[i * d + r].eval(x); };
    };
    spec.da = [=](const Vec& x) {
        Vec m(d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) m[i * d + j] = fd1(a_of(i), x, j, h1);
        return m;
    };
    spec.db = [=](const Vec& x) {
        Vec t(d * d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    t[(i * d + r) * d + j] = fd1(b_of(i, r), x, j, h1);
        return t;
    };
    spec.d2a = [=](const Vec& x) {
        Vec t(d * d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q) {
                    auto g = [&, i, q](const Vec& y) { return fd1(a_of(i), y, q, h2); };
                    t[(i * d + p) * d + q] = fd1(g, x, p, h2);
                }
        return t;
    };
    spec.d2b = [=](const Vec& x) {
        Vec t(d * d * d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t p = 0; p < d; ++p)
                    for (std::size_t q = 0; q < d; ++q) {
                        auto g = [&, i, r, q](const Vec& y) { return fd1(b_of(i, r), y, q, h2); };
                        t[((i * d + r) * d + p) * d + q] = fd1(g, x, p, h2);
                    }
        return t;
    };
    spec.d3a = [=](const Vec& x) {
        Vec t(d * d * d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q)
                    for (std::size_t s = 0; s < d; ++s) {
                        auto g2 = [&, i, q, s](const Vec& y) {
                            auto g1 = [&, i, s](const Vec& z) { return fd1(a_of(i), z, s, h3); };
                            return fd1(g1, y, q, h3);
                        };
                        t[((i * d + p) * d + q) * d + s] = fd1(g2, x, p, h3);
                    }
        return t;
    };
    spec.d3b = [=](const Vec& x) {
        Vec t(d * d * d * d * d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t p = 0; p < d; ++p)
                    for (std::size_t q = 0; q < d; ++q)
                        for (std::size_t s = 0; s < d; ++s) {
                            auto g2 = [&, i, r, q, s](const Vec& y) {
                                auto g1 = [&, i, r, s](const Vec& z) {
                                    return fd1(b_of(i, r), z, s, h3);
                                };
                                return fd1(g1, y, q, h3);
                            };
                            t[(((i * d + r) * d + p) * d + q) * d + s] = fd1(g2, x, p, h3);
                        }
        return t;
    };
    // crude certificates from a coarse probe; good enough for gating n_star
    Rng rng(424243, 0);
    double ai = 0.0, gai = 0.0, gbi = 0.0;
    for (int t = 0; t < 200; ++t) {
        Vec x(d);
        for (auto& v : x) v = 10.0 * (2.0 * rng.uniform() - 1.0);
        ai = std::max(ai, norm2(spec.a(x)));
        gai = std::max(gai, max_abs(spec.da(x)));
        gbi = std::max(gbi, max_abs(spec.db(x)));
    }
    spec.a_inf = ai;
    spec.grad_a_inf = gai;
    spec.grad_b_inf = gbi;
    spec.constant_coeffs = (gai == 0.0 && gbi == 0.0);
    return spec;
}

}  // namespace truncllt
