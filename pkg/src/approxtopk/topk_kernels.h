/* Inner loops of the stage-1 update and the ordered float32 dot product.
 *
 * Written branch-free with restrict pointers so the compiler vectorises along
 * the bucket / column axis. Must be built without FP contraction: the numpy
 * fallback rounds every multiply and add separately.
 */
#ifndef APPROXTOPK_TOPK_KERNELS_H
#define APPROXTOPK_TOPK_KERNELS_H

#include <stddef.h>
#include <stdint.h>
#include <string.h>

static inline uint32_t atk_bits(float f)
{
    uint32_t u;
    memcpy(&u, &f, sizeof u);
    return u;
}

static inline float atk_float(uint32_t u)
{
    float f;
    memcpy(&f, &u, sizeof f);
    return f;
}

/* all-ones when m is set: a, else b */
static inline uint32_t atk_sel(uint32_t m, uint32_t a, uint32_t b)
{
    return (a & m) | (b & ~m);
}

/* One run of `len` consecutive buckets. vals/idx point at slot 0 of the
 * first bucket; slot k lives `nb` elements further on. */
static inline void atk_update_run(float *vals, uint32_t *idx, const float *restrict x,
                                  ptrdiff_t len, ptrdiff_t nb, ptrdiff_t kp,
                                  uint32_t first)
{
    float *restrict last = vals + (kp - 1) * nb;
    uint32_t *restrict ilast = idx + (kp - 1) * nb;
    for (ptrdiff_t t = 0; t < len; ++t) {
        float xv = x[t];
        float a = last[t];
        uint32_t ia = ilast[t];
        uint32_t m = 0u - (uint32_t)(xv >= a);
        last[t] = atk_float(atk_sel(m, atk_bits(xv), atk_bits(a)));
        ilast[t] = atk_sel(m, first + (uint32_t)t, ia);
    }
    for (ptrdiff_t k = kp - 1; k > 0; --k) {
        float *restrict lo = vals + k * nb;
        float *restrict hi = vals + (k - 1) * nb;
        uint32_t *restrict ilo = idx + k * nb;
        uint32_t *restrict ihi = idx + (k - 1) * nb;
        for (ptrdiff_t t = 0; t < len; ++t) {
            float xv = x[t];
            float a = lo[t];
            float b = hi[t];
            uint32_t ia = ilo[t];
            uint32_t ib = ihi[t];
            /* incoming value on the left: no dependency on the previous swap */
            uint32_t m = 0u - (uint32_t)(xv > b);
            uint32_t ua = atk_bits(a), ub = atk_bits(b);
            lo[t] = atk_float(atk_sel(m, ub, ua));
            hi[t] = atk_float(atk_sel(m, ua, ub));
            ilo[t] = atk_sel(m, ib, ia);
            ihi[t] = atk_sel(m, ia, ib);
        }
    }
}

/* row[c] += q * trow[c] for c < w, one rounding per multiply and per add. */
static inline void atk_axpy(float *restrict row, const float *restrict trow, float q,
                            ptrdiff_t w)
{
    for (ptrdiff_t c = 0; c < w; ++c) {
        float prod = q * trow[c];
        row[c] = row[c] + prod;
    }
}

#endif
