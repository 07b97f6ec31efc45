//! Equations of motion. Each function maps a physical state and action to
//! `(next_state, reward, terminal)`.

use std::f64::consts::PI;

use super::constants::{acrobot as ac, cart_pole as cp, mountain_car as mc};

pub fn mountain_car(state: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
    let (mut position, mut velocity) = (state[0], state[1]);
    velocity += (action as f64 - 1.0) * mc::FORCE + (3.0 * position).cos() * (-mc::GRAVITY);
    velocity = velocity.clamp(-mc::MAX_SPEED, mc::MAX_SPEED);
    position += velocity;
    position = position.clamp(mc::MIN_POSITION, mc::MAX_POSITION);
    if position == mc::MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    let terminal = position >= mc::GOAL_POSITION && velocity >= mc::GOAL_VELOCITY;
    (vec![position, velocity], -1.0, terminal)
}

pub fn cart_pole(state: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
    let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
    let force = if action == 1 { cp::FORCE_MAG } else { -cp::FORCE_MAG };
    let (sin, cos) = theta.sin_cos();
    let temp = (force + cp::POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / cp::TOTAL_MASS;
    let theta_acc = (cp::GRAVITY * sin - cos * temp)
        / (cp::HALF_LENGTH * (4.0 / 3.0 - cp::MASS_POLE * cos * cos / cp::TOTAL_MASS));
    let x_acc = temp - cp::POLE_MASS_LENGTH * theta_acc * cos / cp::TOTAL_MASS;

    let next = vec![
        x + cp::TAU * x_dot,
        x_dot + cp::TAU * x_acc,
        theta + cp::TAU * theta_dot,
        theta_dot + cp::TAU * theta_acc,
    ];
    let terminal = next[0].abs() > cp::X_THRESHOLD || next[2].abs() > cp::THETA_THRESHOLD;
    // the failing step is rewarded too
    (next, 1.0, terminal)
}

fn acrobot_derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (ac::LINK_MASS_1, ac::LINK_MASS_2);
    let l1 = ac::LINK_LENGTH_1;
    let (lc1, lc2) = (ac::LINK_COM_POS_1, ac::LINK_COM_POS_2);
    let (i1, i2) = (ac::LINK_MOI, ac::LINK_MOI);
    let g = ac::GRAVITY;
    let [theta1, theta2, dtheta1, dtheta2] = s;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn wrap_angle(mut x: f64) -> f64 {
    while x > PI {
        x -= 2.0 * PI;
    }
    while x < -PI {
        x += 2.0 * PI;
    }
    x
}

pub fn acrobot(state: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
    let torque = ac::TORQUES[action];
    let s = [state[0], state[1], state[2], state[3]];
    let h = ac::DT;
    let add = |a: [f64; 4], k: [f64; 4], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]];
    // one classical RK4 step over [0, dt] with the torque held fixed
    let k1 = acrobot_derivatives(s, torque);
    let k2 = acrobot_derivatives(add(s, k1, h / 2.0), torque);
    let k3 = acrobot_derivatives(add(s, k2, h / 2.0), torque);
    let k4 = acrobot_derivatives(add(s, k3, h), torque);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next[0] = wrap_angle(next[0]);
    next[1] = wrap_angle(next[1]);
    next[2] = next[2].clamp(-ac::MAX_VEL_1, ac::MAX_VEL_1);
    next[3] = next[3].clamp(-ac::MAX_VEL_2, ac::MAX_VEL_2);

    let height = -next[0].cos() - (next[0] + next[1]).cos();
    let terminal = height > ac::TARGET_HEIGHT;
    (next.to_vec(), if terminal { 0.0 } else { -1.0 }, terminal)
}
