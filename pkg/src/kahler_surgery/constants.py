"""Convention constants for lengths and volumes of symmetric metrics.

All three follow from reading the Kahler form omega = i/(2 pi) g_{ij} dz^i ^ dzbar^j
with Riemannian line element ds^2 = g_{ij} dz^i dzbar^j, and the potential
u(rho), rho = log|z|^2, normalized so that the Fubini-Study profile b*s
represents b times the hyperplane class.

* Radial length.  Along r -> r*x with |dz| = dr and dr = (r/2) d rho, the radial
  eigenvalue phi' e^{-rho} gives ds = (1/2) sqrt(phi') d rho.  Hence c0 = 1/2.
  Check: the flat potential u = |z|^2 (phi = e^rho) gives length r from 0 to r.
* Sphere (P^{n-1}) diameter.  The horizontal part of the metric on the sphere
  {rho = const} is phi times the Fubini-Study metric of the quotient P^{n-1},
  whose diameter is pi/2 in this normalization.  Writing the diameter as
  c1 * pi * sqrt(phi) gives c1 = 1/2; the direction distances d_FS used by the
  graph are therefore normalized to diameter pi (d_FS = 2 arccos |<u, v>|).
* Volume.  c_n = n, so that total_volume equals the intersection number
  (b H - a E)^n = b^n - a^n.

Every acceptance tolerance is a ratio or exponent, so none depends on these.
"""

RADIAL_LENGTH_CONST = 0.5
SPHERE_CONST = 0.5


def volume_norm(n: int) -> float:
    return float(n)
