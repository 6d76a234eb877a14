//! Expressions exercised by the numerical property checks, each with a
//! variable to differentiate by.

pub const CORPUS: &[(&str, &str)] = &[
    ("u2 + q*u1^2/u0", "u0"),
    ("u0^q*u2 + q*u0^(q-1)*u1^2 + s*u0 + r*u0^(0-q)", "u0"),
    ("exp(k*q*t)*(r*x+s)", "t"),
    ("((r*x+s)*u1 - 2/q*u0*r)*u0^(0-q)*exp(k*q*t)", "u0"),
    ("u3 - 5*u1*u2/(2*u0) + 5*u1^3/(4*u0^2) + r*exp(-1.5*m*t)*u0^2.5", "u0"),
    ("u0*ln(u0) + sqrt(u0)*tanh(x)", "u0"),
    ("sin(x*t)/cos(t) + tan(t)*sinh(x) - cosh(u1)", "t"),
    ("u0^u1", "u1"),
    ("u0^u1", "u0"),
    ("1/(1+c*exp(m*x+n*y+(m^2+n^2)*t))", "x"),
];
