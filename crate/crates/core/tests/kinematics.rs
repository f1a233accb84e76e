use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rehab_core::kinematics::{
    extract, frame_features, frame_features_from, joint_angle, mapr, registry, registry_len,
    FrameFeature,
};
use rehab_core::motion::Point;
use rehab_core::synthdata::{generate_clip, CompensationMode, Impairment, SubjectProfile};
use rehab_core::{Arm, Component, Exercise, Joint, MotionClip, Skeleton};

fn clip(seed: u64, exercise: Exercise) -> MotionClip {
    let mut profile = SubjectProfile::healthy("S01", seed);
    profile.noise = 0.001;
    profile.impairment = Impairment {
        rom_deficit: 0.3,
        tremor_amplitude: 0.01,
        tremor_frequency: 4.0,
        compensation: CompensationMode::Both,
        compensation_magnitude: 0.4,
    };
    generate_clip(&profile, exercise, 0).unwrap().0
}

fn mapped(clip: &MotionClip, f: impl Fn(Point) -> Point + Copy) -> MotionClip {
    let mut out = clip.clone();
    out.smoothed = clip.smoothed.iter().map(|s| s.map(f)).collect();
    out
}

fn rest_pose() -> [Point; Joint::COUNT] {
    let mut p = [Point::zeros(); Joint::COUNT];
    let set = |p: &mut [Point; Joint::COUNT], j: Joint, x: f64, y: f64| p[j.index()] = Point::new(x, y, 2.0);
    set(&mut p, Joint::Head, 0.0, 1.62);
    set(&mut p, Joint::SpineShoulder, 0.0, 1.4);
    set(&mut p, Joint::SpineMid, 0.0, 1.15);
    set(&mut p, Joint::HipCenter, 0.0, 0.9);
    set(&mut p, Joint::ShoulderLeft, -0.18, 1.4);
    set(&mut p, Joint::ElbowLeft, -0.2, 1.1);
    set(&mut p, Joint::WristLeft, -0.2, 0.85);
    set(&mut p, Joint::ShoulderRight, 0.18, 1.4);
    set(&mut p, Joint::ElbowRight, 0.2, 1.1);
    set(&mut p, Joint::WristRight, 0.3, 0.9);
    p
}

fn times(n: usize, fps: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 / fps).collect()
}

fn column(frames: &[Skeleton], t: &[f64], feature: FrameFeature, component: Component) -> Vec<f64> {
    frame_features_from(frames, t, Arm::Right, component)
        .unwrap()
        .column(feature)
        .unwrap()
}

fn any_rotation() -> impl Strategy<Value = Rotation3<f64>> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0, -3.1f64..3.1).prop_map(|(x, y, z, angle)| {
        Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(x, y, z)), angle)
    })
}

#[test]
fn textbook_angles() {
    let o = Point::zeros();
    let cases = [
        (Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0), 90.0),
        (Point::new(1.0, 0.0, 0.0), Point::new(-1.0, 0.0, 0.0), 180.0),
        (Point::new(1.0, 0.0, 0.0), Point::new(1.0, 1.0, 0.0), 45.0),
    ];
    for (a, c, expected) in cases {
        assert!((joint_angle(&a, &o, &c).unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn stationary_clip_has_no_motion() {
    let frames = vec![Skeleton::new(rest_pose()).unwrap(); 30];
    let t = times(30, 30.0);
    for feature in FrameFeature::for_component(Component::Smoothness) {
        let units = feature.units();
        if units.starts_with("m/s") || feature.id().contains("norm") {
            assert!(column(&frames, &t, *feature, Component::Smoothness).iter().all(|&v| v == 0.0), "{}", feature.id());
        }
    }
}

#[test]
fn linear_wrist_motion_has_constant_speed() {
    let t = times(31, 30.0);
    let frames: Vec<Skeleton> = t
        .iter()
        .map(|&s| {
            let mut p = rest_pose();
            p[Joint::WristRight.index()] += Point::new(0.3 * s, 0.0, 0.0);
            Skeleton::new(p).unwrap()
        })
        .collect();
    let speed = column(&frames, &t, FrameFeature::WristSpeed, Component::Smoothness);
    for v in &speed[1..30] {
        assert!((v - 0.3).abs() < 1e-9, "{v}");
    }
}

#[test]
fn derivative_chain_matches_polynomial_oracle() {
    // Quadratic path: central differences are exact for velocity and
    // acceleration away from the boundary stencils.
    let t = times(40, 30.0);
    let (a, b) = (Point::new(0.4, -0.2, 0.1), Point::new(0.05, 0.3, -0.1));
    let frames: Vec<Skeleton> = t
        .iter()
        .map(|&s| {
            let mut p = rest_pose();
            p[Joint::WristRight.index()] += a * s * s + b * s;
            Skeleton::new(p).unwrap()
        })
        .collect();
    let speed = column(&frames, &t, FrameFeature::WristSpeed, Component::Smoothness);
    let accel = column(&frames, &t, FrameFeature::WristAcceleration, Component::Smoothness);
    let jerk = column(&frames, &t, FrameFeature::WristJerk, Component::Smoothness);
    for i in 3..37 {
        assert!((speed[i] - (2.0 * a * t[i] + b).norm()).abs() < 1e-6);
        assert!((accel[i] - (2.0 * a).norm()).abs() < 1e-6);
        assert!(jerk[i].abs() < 1e-6);
    }
}

#[test]
fn vectors_match_registry_for_every_task() {
    for exercise in Exercise::ALL {
        let c = clip(3, exercise);
        for component in Component::ALL {
            let v = extract(&c, component).unwrap();
            assert_eq!(v.len(), registry_len(exercise, component));
            assert_eq!(v.len(), registry(exercise, component).len());
            assert!(v.values.iter().all(|x| x.is_finite()));
            let m = frame_features(&c, component).unwrap();
            assert_eq!(m.frames(), c.len());
        }
    }
}

#[test]
fn clinical_names_are_present() {
    let names = |e, c| registry(e, c).into_iter().map(|d| d.clinical_name).collect::<Vec<_>>();
    assert!(names(Exercise::E1, Component::Smoothness).iter().any(|n| n == "Mean Arrest Period Ratio"));
    assert!(names(Exercise::E2, Component::Compensation).iter().any(|n| n.starts_with("Leaning trunk to the side")));
}

#[test]
fn mapr_examples() {
    assert_eq!(mapr(&[0.0, 0.0, 0.0, 10.0]), 0.25);
    assert_eq!(mapr(&[2.0; 7]), 1.0);
    assert_eq!(mapr(&[0.0; 7]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn angles_survive_rigid_motion(
        seed in 0u64..500,
        rotation in any_rotation(),
        shift in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
    ) {
        let c = clip(seed, Exercise::ALL[(seed % 3) as usize]);
        let shift = Point::new(shift.0, shift.1, shift.2);
        let moved = mapped(&c, |p| rotation * p + shift);
        for component in Component::ALL {
            let a = frame_features(&c, component).unwrap();
            let b = frame_features(&moved, component).unwrap();
            for (j, feature) in a.columns.iter().enumerate() {
                if feature.is_angle() {
                    for i in 0..a.frames() {
                        prop_assert!((a.values[[i, j]] - b.values[[i, j]]).abs() < 1e-9, "{}", feature.id());
                    }
                }
            }
        }
    }

    #[test]
    fn normalized_distances_survive_scaling(seed in 0u64..500, k in 0.2f64..5.0) {
        let c = clip(seed, Exercise::ALL[(seed % 3) as usize]);
        let scaled = mapped(&c, |p| p * k);
        for component in Component::ALL {
            let a = frame_features(&c, component).unwrap();
            let b = frame_features(&scaled, component).unwrap();
            for (j, feature) in a.columns.iter().enumerate() {
                if feature.units() == "ratio" {
                    for i in 0..a.frames() {
                        prop_assert!((a.values[[i, j]] - b.values[[i, j]]).abs() < 1e-9, "{}", feature.id());
                    }
                }
            }
        }
    }

    #[test]
    fn mapr_is_a_monotone_share(
        speeds in prop::collection::vec(0.0f64..5.0, 1..50),
        extra in 1usize..10,
    ) {
        let base = mapr(&speeds);
        prop_assert!((0.0..=1.0).contains(&base));
        let peak = speeds.iter().copied().fold(0.0, f64::max);
        let fast = if peak > 0.0 { peak } else { 1.0 };
        let mut longer = speeds.clone();
        longer.extend(std::iter::repeat_n(fast, extra));
        prop_assert!(mapr(&longer) >= base);
    }

    #[test]
    fn extraction_is_deterministic(seed in 0u64..500) {
        let c = clip(seed, Exercise::E2);
        for component in Component::ALL {
            let a = extract(&c, component).unwrap().values;
            let b = extract(&c.clone(), component).unwrap().values;
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
