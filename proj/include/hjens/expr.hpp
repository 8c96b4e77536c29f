#pragma once

// Small expression language used for potentials, Hamiltonians and initial
// data given in config files.
//
//   grammar    expr := term {(+|-) term}
//              term := unary {(*|/) unary}
//              unary := '-' unary | power
//              power := primary ['^' unary]          (right-associative)
//              primary := number | ident ['(' args ')'] | '(' expr ')'
//
// Functions: sin cos tan exp log sqrt abs sign min max; constant: pi.
// Variables are declared up front through a VarTable; evaluation binds by
// position. Expressions are immutable trees and support exact symbolic
// differentiation with constant folding.

#include "common.hpp"

#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <utility>

namespace hjens {

struct parse_error : config_error {
    std::size_t offset;  // byte offset into the expression text
    parse_error(const std::string& msg, std::size_t off)
        : config_error(msg + " (byte " + std::to_string(off) + ")"),
          offset(off) {}
};

struct eval_error : numeric_error {
    using numeric_error::numeric_error;
};

// Declared variable names, in binding order. Aliases (x,y,z for q1..q3 in up
// to three dimensions) resolve to the canonical slot.
class VarTable {
public:
    int add(const std::string& name) {
        names_.push_back(name);
        index_[name] = int(names_.size()) - 1;
        return int(names_.size()) - 1;
    }
    void alias(const std::string& name, int slot) { index_[name] = slot; }

    int lookup(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }
    int size() const { return int(names_.size()); }
    const std::string& name(int i) const { return names_[std::size_t(i)]; }

    // t, q1..qs (aliases x,y,z when s <= 3)
    static VarTable time_position(int s) {
        VarTable v;
        v.add("t");
        add_axes(v, "q", s);
        return v;
    }
    // t, q1..qs, p1..ps
    static VarTable time_phase(int s) {
        VarTable v;
        v.add("t");
        add_axes(v, "q", s);
        for (int i = 1; i <= s; ++i) v.add("p" + std::to_string(i));
        return v;
    }
    // t, p1..ps (momentum representation)
    static VarTable time_momentum(int s) {
        VarTable v;
        v.add("t");
        for (int i = 1; i <= s; ++i) v.add("p" + std::to_string(i));
        return v;
    }

private:
    static void add_axes(VarTable& v, const char* stem, int s) {
        static const char* alias_names[3] = {"x", "y", "z"};
        for (int i = 1; i <= s; ++i) {
            int slot = v.add(stem + std::to_string(i));
            if (s <= 3) v.alias(alias_names[i - 1], slot);
        }
    }
    std::vector<std::string> names_;
    std::map<std::string, int> index_;
};

namespace detail {

enum class Op { num, var, neg, add, sub, mul, div, pow, call };
enum class Fn { sin, cos, tan, exp, log, sqrt, abs, sign, min, max };

struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    Op op;
    double value = 0;      // Op::num
    int var = -1;          // Op::var
    std::string var_name;  // kept for diagnostics and printing
    Fn fn = Fn::sin;
    std::vector<NodePtr> kids;
};

inline NodePtr mk_num(double v) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::num;
    n->value = v;
    return n;
}

inline NodePtr mk_var(int slot, std::string name) {
    auto n = std::make_shared<ExprNode>();
    n->op = Op::var;
    n->var = slot;
    n->var_name = std::move(name);
    return n;
}

inline bool is_num(const NodePtr& n, double v) {
    return n->op == Op::num && n->value == v;
}
inline bool is_const(const NodePtr& n) { return n->op == Op::num; }

inline NodePtr mk_neg(NodePtr a) {
    if (is_const(a)) return mk_num(-a->value);
    if (a->op == Op::neg) return a->kids[0];
    auto n = std::make_shared<ExprNode>();
    n->op = Op::neg;
    n->kids = {std::move(a)};
    return n;
}

inline NodePtr mk_bin(Op op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->kids = {std::move(a), std::move(b)};
    return n;
}

inline NodePtr mk_add(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return mk_num(a->value + b->value);
    if (is_num(a, 0)) return b;
    if (is_num(b, 0)) return a;
    return mk_bin(Op::add, std::move(a), std::move(b));
}

inline NodePtr mk_sub(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return mk_num(a->value - b->value);
    if (is_num(b, 0)) return a;
    if (is_num(a, 0)) return mk_neg(std::move(b));
    return mk_bin(Op::sub, std::move(a), std::move(b));
}

inline NodePtr mk_mul(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return mk_num(a->value * b->value);
    if (is_num(a, 0) || is_num(b, 0)) return mk_num(0);
    if (is_num(a, 1)) return b;
    if (is_num(b, 1)) return a;
    if (is_num(a, -1)) return mk_neg(std::move(b));
    if (is_num(b, -1)) return mk_neg(std::move(a));
    return mk_bin(Op::mul, std::move(a), std::move(b));
}

inline NodePtr mk_div(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b) && b->value != 0)
        return mk_num(a->value / b->value);
    if (is_num(a, 0)) return mk_num(0);
    if (is_num(b, 1)) return a;
    return mk_bin(Op::div, std::move(a), std::move(b));
}

inline NodePtr mk_pow(NodePtr a, NodePtr b) {
    if (is_num(b, 0)) return mk_num(1);
    if (is_num(b, 1)) return a;
    if (is_const(a) && is_const(b)) return mk_num(std::pow(a->value, b->value));
    return mk_bin(Op::pow, std::move(a), std::move(b));
}

inline double eval_node(const ExprNode& n, ConstSpan vals);

inline NodePtr mk_call(Fn fn, std::vector<NodePtr> args) {
    bool folded = true;
    for (const auto& a : args) folded = folded && is_const(a);
    auto n = std::make_shared<ExprNode>();
    n->op = Op::call;
    n->fn = fn;
    n->kids = std::move(args);
    if (folded) {
        try {
            return mk_num(eval_node(*n, ConstSpan{}));
        } catch (const eval_error&) {
            // domain error on constants: defer to evaluation time
        }
    }
    return n;
}

inline double eval_node(const ExprNode& n, ConstSpan vals) {
    switch (n.op) {
        case Op::num: return n.value;
        case Op::var:
            if (n.var < 0 || std::size_t(n.var) >= vals.size())
                throw eval_error("unbound variable '" + n.var_name + "'");
            return vals[std::size_t(n.var)];
        case Op::neg: return -eval_node(*n.kids[0], vals);
        case Op::add: return eval_node(*n.kids[0], vals) + eval_node(*n.kids[1], vals);
        case Op::sub: return eval_node(*n.kids[0], vals) - eval_node(*n.kids[1], vals);
        case Op::mul: return eval_node(*n.kids[0], vals) * eval_node(*n.kids[1], vals);
        case Op::div: {
            const double den = eval_node(*n.kids[1], vals);
            if (den == 0.0) throw eval_error("division by zero");
            return eval_node(*n.kids[0], vals) / den;
        }
        case Op::pow:
            return std::pow(eval_node(*n.kids[0], vals), eval_node(*n.kids[1], vals));
        case Op::call: {
            double a = eval_node(*n.kids[0], vals);
            switch (n.fn) {
                case Fn::sin: return std::sin(a);
                case Fn::cos: return std::cos(a);
                case Fn::tan: return std::tan(a);
                case Fn::exp: return std::exp(a);
                case Fn::log:
                    if (a <= 0)
                        throw eval_error("log of non-positive value " +
                                         std::to_string(a));
                    return std::log(a);
                case Fn::sqrt:
                    if (a < 0)
                        throw eval_error("sqrt of negative value " +
                                         std::to_string(a));
                    return std::sqrt(a);
                case Fn::abs: return std::fabs(a);
                case Fn::sign: return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
                case Fn::min: return std::min(a, eval_node(*n.kids[1], vals));
                case Fn::max: return std::max(a, eval_node(*n.kids[1], vals));
            }
            break;
        }
    }
    throw eval_error("corrupt expression node");
}

inline NodePtr diff_node(const NodePtr& n, int var);

inline NodePtr d_call(const ExprNode& n, int var) {
    const NodePtr& u = n.kids[0];
    NodePtr du = diff_node(u, var);
    switch (n.fn) {
        case Fn::sin: return mk_mul(mk_call(Fn::cos, {u}), du);
        case Fn::cos: return mk_neg(mk_mul(mk_call(Fn::sin, {u}), du));
        case Fn::tan: {
            auto sec2 = mk_div(mk_num(1), mk_pow(mk_call(Fn::cos, {u}), mk_num(2)));
            return mk_mul(sec2, du);
        }
        case Fn::exp: return mk_mul(mk_call(Fn::exp, {u}), du);
        case Fn::log: return mk_div(du, u);
        case Fn::sqrt:
            return mk_div(du, mk_mul(mk_num(2), mk_call(Fn::sqrt, {u})));
        case Fn::abs: return mk_mul(mk_call(Fn::sign, {u}), du);
        case Fn::sign: return mk_num(0);  // zero almost everywhere
        case Fn::min:
        case Fn::max: {
            // min(u,v) = (u+v)/2 - |u-v|/2, so
            // d min = (u'+v')/2 - sign(u-v) (u'-v')/2; max flips the sign.
            const NodePtr& v = n.kids[1];
            NodePtr dv = diff_node(v, var);
            auto half_sum = mk_mul(mk_num(0.5), mk_add(du, dv));
            auto sgn = mk_call(Fn::sign, {mk_sub(u, v)});
            auto half_dif = mk_mul(mk_num(0.5), mk_mul(sgn, mk_sub(du, dv)));
            return n.fn == Fn::min ? mk_sub(half_sum, half_dif)
                                   : mk_add(half_sum, half_dif);
        }
    }
    throw eval_error("corrupt expression node");
}

inline NodePtr diff_node(const NodePtr& n, int var) {
    switch (n->op) {
        case Op::num: return mk_num(0);
        case Op::var: return mk_num(n->var == var ? 1 : 0);
        case Op::neg: return mk_neg(diff_node(n->kids[0], var));
        case Op::add:
            return mk_add(diff_node(n->kids[0], var), diff_node(n->kids[1], var));
        case Op::sub:
            return mk_sub(diff_node(n->kids[0], var), diff_node(n->kids[1], var));
        case Op::mul: {
            const NodePtr &u = n->kids[0], &v = n->kids[1];
            return mk_add(mk_mul(diff_node(u, var), v),
                          mk_mul(u, diff_node(v, var)));
        }
        case Op::div: {
            const NodePtr &u = n->kids[0], &v = n->kids[1];
            auto num = mk_sub(mk_mul(diff_node(u, var), v),
                              mk_mul(u, diff_node(v, var)));
            return mk_div(num, mk_pow(v, mk_num(2)));
        }
        case Op::pow: {
            const NodePtr &u = n->kids[0], &v = n->kids[1];
            NodePtr du = diff_node(u, var);
            if (is_const(v)) {
                // d u^c = c u^(c-1) u'
                auto c = v->value;
                return mk_mul(mk_mul(mk_num(c), mk_pow(u, mk_num(c - 1))), du);
            }
            // d u^v = u^v (v' log u + v u'/u)
            NodePtr dv = diff_node(v, var);
            auto inner = mk_add(mk_mul(dv, mk_call(Fn::log, {u})),
                                mk_div(mk_mul(v, du), u));
            return mk_mul(mk_pow(u, v), inner);
        }
        case Op::call: return d_call(*n, var);
    }
    throw eval_error("corrupt expression node");
}

inline void print_node(const ExprNode& n, std::ostream& os) {
    switch (n.op) {
        case Op::num: os << n.value; return;
        case Op::var: os << n.var_name; return;
        case Op::neg:
            os << "(-";
            print_node(*n.kids[0], os);
            os << ")";
            return;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow: {
            const char* sym = n.op == Op::add   ? "+"
                              : n.op == Op::sub ? "-"
                              : n.op == Op::mul ? "*"
                              : n.op == Op::div ? "/"
                                                : "^";
            os << "(";
            print_node(*n.kids[0], os);
            os << sym;
            print_node(*n.kids[1], os);
            os << ")";
            return;
        }
        case Op::call: {
            static const char* names[] = {"sin", "cos",  "tan", "exp", "log",
                                          "sqrt", "abs", "sign", "min", "max"};
            os << names[int(n.fn)] << "(";
            for (std::size_t i = 0; i < n.kids.size(); ++i) {
                if (i) os << ",";
                print_node(*n.kids[i], os);
            }
            os << ")";
            return;
        }
    }
}

}  // namespace detail

class Expr {
public:
    Expr() : root_(detail::mk_num(0)) {}
    explicit Expr(detail::NodePtr n) : root_(std::move(n)) {}
    static Expr number(double v) { return Expr(detail::mk_num(v)); }
    static Expr variable(const VarTable& vars, const std::string& name) {
        int slot = vars.lookup(name);
        if (slot < 0) throw config_error("unknown identifier '" + name + "'");
        return Expr(detail::mk_var(slot, name));
    }

    double eval(ConstSpan vals) const { return detail::eval_node(*root_, vals); }

    Expr derivative(int var) const { return Expr(detail::diff_node(root_, var)); }

    Expr negated() const { return Expr(detail::mk_neg(root_)); }

    bool is_constant() const { return root_->op == detail::Op::num; }
    bool depends_on(int var) const { return depends(root_, var); }

    std::string str() const {
        std::ostringstream os;
        detail::print_node(*root_, os);
        return os.str();
    }

private:
    static bool depends(const detail::NodePtr& n, int var) {
        if (n->op == detail::Op::var) return n->var == var;
        for (const auto& k : n->kids)
            if (depends(k, var)) return true;
        return false;
    }
    detail::NodePtr root_;
};

namespace detail {

class Parser {
public:
    Parser(const std::string& src, const VarTable& vars)
        : src_(src), vars_(vars) {}

    NodePtr parse() {
        NodePtr e = expression();
        skip_ws();
        if (pos_ != src_.size())
            throw parse_error("unexpected trailing input '" +
                                  src_.substr(pos_, 8) + "'",
                              pos_);
        return e;
    }

private:
    NodePtr expression() {
        NodePtr e = term();
        for (;;) {
            skip_ws();
            if (accept('+'))
                e = mk_add(e, term());
            else if (accept('-'))
                e = mk_sub(e, term());
            else
                return e;
        }
    }

    NodePtr term() {
        NodePtr e = unary();
        for (;;) {
            skip_ws();
            if (accept('*'))
                e = mk_mul(e, unary());
            else if (accept('/'))
                e = mk_div(e, unary());
            else
                return e;
        }
    }

    NodePtr unary() {
        skip_ws();
        if (accept('-')) return mk_neg(unary());
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        skip_ws();
        if (accept('^')) return mk_pow(base, unary());  // right-associative
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw parse_error("unexpected end of expression", pos_);
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        if (accept('(')) {
            NodePtr e = expression();
            expect(')');
            return e;
        }
        throw parse_error(std::string("unexpected character '") + c + "'", pos_);
    }

    NodePtr number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               std::isdigit(static_cast<unsigned char>(src_[pos_])))
            ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() &&
                   std::isdigit(static_cast<unsigned char>(src_[pos_])))
                ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ >= src_.size() ||
                !std::isdigit(static_cast<unsigned char>(src_[pos_])))
                pos_ = mark;  // not an exponent after all
            else
                while (pos_ < src_.size() &&
                       std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    ++pos_;
        }
        const std::string tok = src_.substr(start, pos_ - start);
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return mk_num(v);
        } catch (const std::exception&) {
            throw parse_error("malformed number '" + tok + "'", start);
        }
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_'))
            ++pos_;
        std::string name = src_.substr(start, pos_ - start);
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '(') return call(name, start);
        if (name == "pi") return mk_num(3.14159265358979323846);
        int slot = vars_.lookup(name);
        if (slot < 0)
            throw parse_error("unknown identifier '" + name + "'", start);
        return mk_var(slot, vars_.name(slot));
    }

    NodePtr call(const std::string& name, std::size_t start) {
        static const std::map<std::string, std::pair<Fn, int>> table = {
            {"sin", {Fn::sin, 1}},   {"cos", {Fn::cos, 1}},
            {"tan", {Fn::tan, 1}},   {"exp", {Fn::exp, 1}},
            {"log", {Fn::log, 1}},   {"sqrt", {Fn::sqrt, 1}},
            {"abs", {Fn::abs, 1}},   {"sign", {Fn::sign, 1}},
            {"min", {Fn::min, 2}},   {"max", {Fn::max, 2}}};
        auto it = table.find(name);
        if (it == table.end())
            throw parse_error("unknown function '" + name + "'", start);
        expect('(');
        std::vector<NodePtr> args;
        args.push_back(expression());
        while (true) {
            skip_ws();
            if (accept(',')) {
                args.push_back(expression());
            } else {
                break;
            }
        }
        expect(')');
        if (int(args.size()) != it->second.second)
            throw parse_error("function '" + name + "' takes " +
                                  std::to_string(it->second.second) +
                                  " argument(s), got " +
                                  std::to_string(args.size()),
                              start);
        return mk_call(it->second.first, std::move(args));
    }

    void skip_ws() {
        while (pos_ < src_.size() &&
               std::isspace(static_cast<unsigned char>(src_[pos_])))
            ++pos_;
    }
    bool accept(char c) {
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        skip_ws();
        if (!accept(c))
            throw parse_error(std::string("expected '") + c + "'", pos_);
    }

    const std::string& src_;
    const VarTable& vars_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expression(const std::string& text, const VarTable& vars) {
    detail::Parser p(text, vars);
    return Expr(p.parse());
}

}  // namespace hjens
