//! Third-party dependencies of a prefix: which packages its imports need,
//! and installing the missing ones into the shared environment.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Mutex, OnceLock};

use rustpython_parser::ast::Stmt;
use serde::{Deserialize, Serialize};

use crate::instrument::RUNTIME_MODULE;
use crate::model::Prefix;
use crate::names::is_stdlib_module;
use crate::source::parse_suite;

const ALIASES: &str = include_str!("../../data/package_aliases.txt");

fn alias_table() -> &'static HashMap<&'static str, &'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        ALIASES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once(char::is_whitespace))
            .map(|(module, package)| (module, package.trim()))
            .collect()
    })
}

/// Installable package name for a top-level import name.
pub fn package_for(module: &str) -> &str {
    alias_table().get(module).copied().unwrap_or(module)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyPlan {
    /// Top-level third-party module names imported by the prefix.
    pub import_names: BTreeSet<String>,
    pub package_names: BTreeSet<String>,
    pub already_installed: BTreeSet<String>,
    pub to_install: BTreeSet<String>,
}

/// Answers whether a module can be imported in the target environment.
pub trait EnvProbe: Send + Sync {
    fn is_importable(&self, module: &str) -> bool;
}

impl<F: Fn(&str) -> bool + Send + Sync> EnvProbe for F {
    fn is_importable(&self, module: &str) -> bool {
        self(module)
    }
}

pub struct PythonEnvProbe {
    pub interpreter: PathBuf,
}

impl EnvProbe for PythonEnvProbe {
    fn is_importable(&self, module: &str) -> bool {
        const CHECK: &str = "import importlib.util, sys; sys.exit(0 if importlib.util.find_spec(sys.argv[1]) else 1)";
        Command::new(&self.interpreter)
            .args(["-c", CHECK, module])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    }
}

fn top_level_imports(entry: &str, out: &mut BTreeSet<String>) {
    // Unparsable lines are left for post-processing to reject.
    let Ok(suite) = parse_suite(entry) else { return };
    for stmt in suite {
        match stmt {
            Stmt::Import(s) => {
                for alias in s.names {
                    if let Some(root) = alias.name.split('.').next() {
                        out.insert(root.to_string());
                    }
                }
            }
            Stmt::ImportFrom(s) if s.level.map_or(0, |l| l.to_u32()) == 0 => {
                if let Some(root) = s.module.as_ref().and_then(|m| m.split('.').next()) {
                    out.insert(root.to_string());
                }
            }
            _ => {}
        }
    }
}

pub fn plan_dependencies(prefix: &Prefix, probe: &dyn EnvProbe) -> DependencyPlan {
    let mut imported = BTreeSet::new();
    for entry in &prefix.imports {
        top_level_imports(entry, &mut imported);
    }
    let import_names: BTreeSet<String> = imported
        .into_iter()
        .filter(|m| !is_stdlib_module(m) && m != RUNTIME_MODULE)
        .collect();
    let mut plan = DependencyPlan {
        import_names: import_names.clone(),
        ..Default::default()
    };
    for module in &import_names {
        let package = package_for(module).to_string();
        plan.package_names.insert(package.clone());
        if probe.is_importable(module) {
            plan.already_installed.insert(package);
        }
    }
    plan.to_install = plan
        .package_names
        .difference(&plan.already_installed)
        .cloned()
        .collect();
    plan
}

pub trait PackageInstaller: Send + Sync {
    fn install(&self, package: &str) -> Result<(), String>;
}

impl<F: Fn(&str) -> Result<(), String> + Send + Sync> PackageInstaller for F {
    fn install(&self, package: &str) -> Result<(), String> {
        self(package)
    }
}

/// `python -m pip install <package>` with the environment's interpreter.
pub struct PipInstaller {
    pub interpreter: PathBuf,
}

impl PackageInstaller for PipInstaller {
    fn install(&self, package: &str) -> Result<(), String> {
        let output = Command::new(&self.interpreter)
            .args(["-m", "pip", "install", "--disable-pip-version-check", "-q", package])
            .stdin(Stdio::null())
            .output()
            .map_err(|e| e.to_string())?;
        if output.status.success() {
            Ok(())
        } else {
            let stderr = String::from_utf8_lossy(&output.stderr);
            Err(stderr.lines().last().unwrap_or("pip failed").to_string())
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallReport {
    pub installed: Vec<String>,
    pub failed: Vec<String>,
    /// Packages skipped because an earlier attempt already ran.
    pub cached: Vec<String>,
}

/// Installs missing packages at most once per package, one installer
/// process at a time.
pub struct DependencyInstaller {
    probe: Box<dyn EnvProbe>,
    installer: Box<dyn PackageInstaller>,
    attempts: Mutex<HashMap<String, Result<(), String>>>,
}

impl DependencyInstaller {
    pub fn new(probe: Box<dyn EnvProbe>, installer: Box<dyn PackageInstaller>) -> Self {
        DependencyInstaller {
            probe,
            installer,
            attempts: Mutex::new(HashMap::new()),
        }
    }

    pub fn plan(&self, prefix: &Prefix) -> DependencyPlan {
        plan_dependencies(prefix, self.probe.as_ref())
    }

    pub fn install(&self, plan: &DependencyPlan) -> InstallReport {
        let mut report = InstallReport::default();
        let mut attempts = self.attempts.lock().unwrap_or_else(|e| e.into_inner());
        for package in &plan.to_install {
            if let Some(previous) = attempts.get(package) {
                report.cached.push(package.clone());
                if previous.is_err() {
                    report.failed.push(package.clone());
                }
                continue;
            }
            let result = self.installer.install(package);
            match &result {
                Ok(()) => report.installed.push(package.clone()),
                Err(e) => {
                    log::warn!("installing {package} failed: {e}");
                    report.failed.push(package.clone());
                }
            }
            attempts.insert(package.clone(), result);
        }
        report
    }

    pub fn ensure(&self, prefix: &Prefix) -> InstallReport {
        let plan = self.plan(prefix);
        if plan.to_install.is_empty() {
            return InstallReport::default();
        }
        self.install(&plan)
    }
}
