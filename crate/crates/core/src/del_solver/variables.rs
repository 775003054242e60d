//! Unknowns and residual blocks of the Stage-4 system, with flattening.

use nalgebra::DVector;

/// Defines a struct of named vector blocks, with sizes given as multiples of
/// `N` and `d`, and the flattening helpers shared by variables and residuals.
macro_rules! vector_blocks {
    (
        $(#[$meta:meta])*
        pub struct $name:ident { $( $(#[$fmeta:meta])* $field:ident : $kind:ident ),* $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $( $(#[$fmeta])* pub $field: DVector<f64>, )*
        }

        impl $name {
            /// Block names in flattening order.
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn zeros(n: usize, d: usize) -> Self {
                Self { $( $field: DVector::zeros(block_len(BlockKind::$kind, n, d)), )* }
            }

            /// Total length `12N + 5d`.
            pub fn len_for(n: usize, d: usize) -> usize {
                0 $( + block_len(BlockKind::$kind, n, d) )*
            }

            pub fn blocks(&self) -> Vec<(&'static str, &DVector<f64>)> {
                vec![$( (stringify!($field), &self.$field), )*]
            }

            pub fn to_vector(&self) -> DVector<f64> {
                let parts: Vec<f64> = self
                    .blocks()
                    .into_iter()
                    .flat_map(|(_, b)| b.iter().copied().collect::<Vec<_>>())
                    .collect();
                DVector::from_vec(parts)
            }

            /// Inverse of [`Self::to_vector`].
            pub fn from_vector(n: usize, d: usize, x: &DVector<f64>) -> Self {
                assert_eq!(x.len(), Self::len_for(n, d), "flattened length");
                let mut offset = 0;
                let mut take = |kind: BlockKind| {
                    let len = block_len(kind, n, d);
                    let b = x.rows(offset, len).into_owned();
                    offset += len;
                    b
                };
                Self { $( $field: take(BlockKind::$kind), )* }
            }

            /// `∞`-norm over all blocks.
            pub fn max_norm(&self) -> f64 {
                self.blocks().into_iter().fold(0.0, |m, (_, b)| m.max(b.amax()))
            }

            /// `∞`-norm of each block, in flattening order.
            pub fn block_norms(&self) -> Vec<(&'static str, f64)> {
                self.blocks().into_iter().map(|(name, b)| (name, b.amax())).collect()
            }

            pub fn is_finite(&self) -> bool {
                self.blocks().into_iter().all(|(_, b)| b.iter().all(|x| x.is_finite()))
            }
        }
    };
}

#[derive(Clone, Copy)]
enum BlockKind {
    Config,
    Constraint,
}

fn block_len(kind: BlockKind, n: usize, d: usize) -> usize {
    match kind {
        BlockKind::Config => n,
        BlockKind::Constraint => d,
    }
}

vector_blocks! {
    /// Every unknown of the Stage-4 system.
    pub struct Stage4Variables {
        q2: Config,
        v2: Config,
        q1_minus: Config,
        q_bar: Config,
        q2_plus: Config,
        theta_plus: Constraint,
        lambda_minus: Config,
        lambda_plus: Config,
        mu: Config,
        lambda_hat_minus: Config,
        lambda_hat_plus: Config,
        mu_hat_1: Config,
        mu_hat_2: Config,
        nu1_minus: Constraint,
        nu2_minus: Constraint,
        nu1_plus: Constraint,
        nu2_plus: Constraint,
    }
}

vector_blocks! {
    /// One block per Stage-4 equation group.
    pub struct Stage4Residual {
        /// `q₁⁻ − ℙ∂̂⁻(w₁)`
        projection_minus_1: Config,
        /// `q̄ − ℙ∂̂⁺(w₁)`
        projection_plus_1: Config,
        /// Stationarity in `δq₁`.
        stationarity_q1: Config,
        /// `Dg(q₁⁻) λ⁻`
        tangency_lambda_minus: Constraint,
        /// `λ̂⁻ − Dℙᵀ λ⁻`
        hat_lambda_minus: Config,
        /// Stationarity in `δv₁`.
        stationarity_v1: Config,
        /// `Dg(q̄) μ`
        tangency_mu: Constraint,
        /// `μ̂₁ − Dℙᵀ μ`
        hat_mu_1: Config,
        /// Stationarity in `δq₂`.
        stationarity_q2: Config,
        /// `Dg(q₂⁺) λ⁺`
        tangency_lambda_plus: Constraint,
        /// `λ̂⁺ − Dℙᵀ λ⁺`
        hat_lambda_plus: Config,
        /// Stationarity in `δv₂`.
        stationarity_v2: Config,
        /// `Dg(q₂) v₂`
        velocity_constraint: Constraint,
        /// `μ̂₂ − Dℙᵀ μ`
        hat_mu_2: Config,
        /// `∂̂⁻(w₂) − ι(q̄, θ⁺)`
        connection: Config,
        /// `g(q₂)`
        position_constraint: Constraint,
        /// `q₂⁺ − ℙ∂̂⁺(w₂)`
        projection_plus_2: Config,
    }
}

impl Stage4Variables {
    pub fn state(&self) -> crate::model::State {
        crate::model::State::new(self.q2.clone(), self.v2.clone())
    }
}

impl std::ops::AddAssign<&Stage4Variables> for Stage4Variables {
    fn add_assign(&mut self, rhs: &Stage4Variables) {
        let n = self.q2.len();
        let d = self.theta_plus.len();
        let sum = self.to_vector() + rhs.to_vector();
        *self = Stage4Variables::from_vector(n, d, &sum);
    }
}

impl std::ops::Neg for Stage4Residual {
    type Output = Stage4Residual;
    fn neg(self) -> Stage4Residual {
        let n = self.projection_minus_1.len();
        let d = self.tangency_mu.len();
        Stage4Residual::from_vector(n, d, &-self.to_vector())
    }
}
