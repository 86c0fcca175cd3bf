import os
import simplejson as json
from termcolor import colored

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class SConfig():
    """Tool-wide settings, persisted as JSON in the user config directory.
    Experiment settings belong to the run config, not here."""

    def __init__(self):
        self.configFile = None
        self.outputDirectory = os.environ.get("SUPINF_OUT", os.path.join(os.getcwd(), "supinf_out"))
        self.logLevel = "INFO"
        self.jobs = 1
        self.kktTol = 1e-6
        self.massTol = 1e-12
        self.slackTol = 1e-8
        return

    def Initialize(self, configFile: str):
        self.configFile = configFile
        print(colored("---------------- supinf settings ----------------", "yellow"))
        try:
            os.makedirs(os.path.dirname(configFile), exist_ok=True)
            if os.path.exists(configFile):
                self.Update(self.Load(configFile))
                print(f"settings loaded from {configFile}")
            else:
                print(f"no settings at {configFile}, writing defaults.")
            self.Store(configFile)
        except (OSError, json.JSONDecodeError) as e:
            print(colored(f"settings file unusable, running with defaults. EXCEPTION: {str(e)}", "red"))

        if "SUPINF_OUT" in os.environ:
            self.outputDirectory = os.environ["SUPINF_OUT"]
        return

    def Accept(self, key: str, value) -> bool:
        current = getattr(self, key)
        if key == "logLevel":
            return value in LOG_LEVELS
        if key == "jobs":
            return isinstance(value, int) and not isinstance(value, bool) and value >= 1
        if isinstance(current, float):
            return isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
        return isinstance(value, type(current))

    def Update(self, cfgDict: dict):
        for key, value in cfgDict.items():
            if key == "configFile" or key not in self.__dict__ or value is None:
                continue
            if self.Accept(key, value):
                setattr(self, key, float(value) if isinstance(getattr(self, key), float) else value)
            else:
                print(colored(f"ignoring setting {key} = {value!r}", "red"))
        return

    def ToJson(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "configFile"}

    def Load(self, configFile: str) -> dict:
        with open(configFile, "r") as f:
            data = json.load(f)
        return data if isinstance(data, dict) else {}

    def Store(self, configFile: str):
        with open(configFile, "w") as f:
            json.dump(self.ToJson(), f, indent=2)
        return


config = SConfig()
