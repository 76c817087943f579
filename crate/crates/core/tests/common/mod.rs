#![allow(dead_code, clippy::excessive_precision)]

use std::sync::Arc;

use regularity_lab::grid::{Domain, GridSpec};

/// `(d, p, q, a₀, c₀) → (γ, β, δ, A, A_proof, α, K₁)` at 50 digits, from `tests/oracles/constants.py`.
pub const CONSTANTS_ORACLE: [([f64; 5], [f64; 7]); 12] = [
    (
        [1.0, 4.0, 4.0, 1.0, 1.0],
        [
            1.25,
            0.245,
            0.00034765208113313022934,
            0.41313520909123188299,
            0.47600853217312116806,
            0.00025082156854956855623,
            1.1465313506452401629,
        ],
    ),
    (
        [1.0, f64::INFINITY, 4.0, 1.0, 2.0],
        [
            1.75,
            0.245,
            0.00012789405332934487525,
            0.29854477900733126072,
            0.36403322257924674114,
            0.000092261958252389662004,
            1.1428571428571428571,
        ],
    ),
    (
        [2.0, 4.0, 4.0, 1.0, 2.0],
        [
            1.0,
            0.1225,
            6.1980244052880139478e-6,
            0.50370465554228526431,
            0.56414921420735949602,
            4.4709433919313339605e-6,
            1.3554030054147672197,
        ],
    ),
    (
        [2.0, 8.0, 8.0, 0.5, 1.5],
        [
            1.5,
            0.06125,
            0.000016847977113240088992,
            0.068185360012041896217,
            0.13592228554702594628,
            0.000012153348895100616019,
            1.049420857041063902,
        ],
    ),
    (
        [3.0, 4.0, 6.0, 1.0, 1.0],
        [
            1.0,
            0.081666666666666666667,
            4.9893235911869233255e-6,
            0.34583809990635049043,
            0.38733867189511254928,
            3.5990451796058202676e-6,
            1.3554030054147672197,
        ],
    ),
    (
        [3.0, 10.0, 10.0, 2.0, 3.0],
        [
            1.5,
            0.16333333333333333333,
            1.2367296711747398416e-8,
            0.56200139130998981857,
            0.39608822152523660803,
            8.9211188727852399902e-9,
            1.3074275158326398311,
        ],
    ),
    (
        [2.0, f64::INFINITY, f64::INFINITY, 1.0, 1.0],
        [
            2.0,
            0.1225,
            0.000045797550033214415728,
            0.09765625,
            0.1225,
            0.000033036705664756057283,
            1.0,
        ],
    ),
    (
        [1.0, 2.5, 3.0, 0.7, 1.2],
        [
            0.86666666666666666667,
            0.1715,
            0.00028463345019525536137,
            0.42714830854002665356,
            0.54999468581343998118,
            0.00020534885949767095306,
            1.1454615042402532306,
        ],
    ),
    (
        [3.0, 6.0, 12.0, 0.25, 4.0],
        [
            1.4166666666666666667,
            0.020416666666666666667,
            6.1573144691342665615e-10,
            0.023202714508607462524,
            0.072731658189263393252,
            4.4415635262743385249e-10,
            0.96285316649572394977,
        ],
    ),
    (
        [2.0, 3.0, 5.0, 1.5, 1.1],
        [
            0.93333333333333333333,
            0.18375,
            0.000037495862627820191674,
            0.69126296666024186245,
            0.63592249970721474887,
            0.000027048054631744467935,
            1.3755811791761752381,
        ],
    ),
    (
        [1.0, 1.5, 2.0, 1.0, 1.0],
        [
            0.16666666666666666667,
            0.245,
            0.00034765208113313022934,
            1.3854180248814739791,
            1.4118346535611658999,
            0.00025082156854956855623,
            1.5874010519681994748,
        ],
    ),
    (
        [4.0, 5.0, 20.0, 1.0, 2.0],
        [
            1.4,
            0.06125,
            9.2670021902707500801e-9,
            0.1440673575563256847,
            0.16883824230595853224,
            6.6847290828790861944e-9,
            1.1127396349887635846,
        ],
    ),
];

pub fn unit_box(d: usize, n: usize) -> Arc<Domain> {
    Domain::neumann_box(GridSpec::cube(d, 0.0, 1.0, n).unwrap()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Adaptive Dormand–Prince 5(4) integration of the autonomous `y' = f(y)` from `0` to `t_end`.
pub fn dopri45(f: impl Fn(&[f64], &mut [f64]), y0: &[f64], t_end: f64, rtol: f64, atol: f64) -> Vec<f64> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = 1e-3 * t_end;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    while t < t_end {
        h = h.min(t_end - t);
        f(&y, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                tmp[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            f(&tmp, &mut k[s]);
        }
        let mut err = 0.0f64;
        let mut y5 = vec![0.0; n];
        for i in 0..n {
            y5[i] = y[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>();
            let y4 = y[i] + h * (0..7).map(|j| B4[j] * k[j][i]).sum::<f64>();
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            err = err.max(((y5[i] - y4) / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    y
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .cloned()
                .chain((0..m).map(|j| if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        aug[col].iter_mut().for_each(|v| *v /= d);
        for r in 0..m {
            if r != col {
                let f = aug[r][col];
                let pivot_row = aug[col].clone();
                aug[r].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    aug.into_iter().map(|row| row[m..].to_vec()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    (0..m)
        .map(|i| (0..m).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}
