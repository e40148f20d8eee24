#pragma once

#include <cmath>

namespace difflens {

template <class T>
struct Vec2 {
    T x{};
    T y{};
};

using Vec2d = Vec2<double>;

/// Small 3-vector usable with plain doubles or taped scalars.
template <class T>
struct Vec3 {
    T x{};
    T y{};
    T z{};
};

using Vec3d = Vec3<double>;

template <class T>
inline Vec3<T> operator+(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
}

template <class T>
inline Vec3<T> operator-(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}

template <class T>
inline Vec3<T> operator-(const Vec3<T>& a) {
    return {-a.x, -a.y, -a.z};
}

template <class T, class S>
inline Vec3<T> operator*(const S& s, const Vec3<T>& a) {
    return {s * a.x, s * a.y, s * a.z};
}

template <class T, class S>
inline Vec3<T> operator*(const Vec3<T>& a, const S& s) {
    return {a.x * s, a.y * s, a.z * s};
}

template <class T>
inline T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
inline Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
inline T norm2(const Vec3<T>& a) {
    return dot(a, a);
}

template <class T>
inline T norm(const Vec3<T>& a) {
    using std::sqrt;
    return sqrt(norm2(a));
}

template <class T>
inline Vec3<T> normalized(const Vec3<T>& a) {
    T n = norm(a);
    T inv = T(1.0) / n;
    return {a.x * inv, a.y * inv, a.z * inv};
}

} // namespace difflens
